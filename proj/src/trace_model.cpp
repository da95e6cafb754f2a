/*
 * Copyright 2026 The mfoesim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "mfoesim/trace_model.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <queue>
#include <random>
#include <set>
#include <thread>
#include <tuple>

namespace mfoesim {

std::uint32_t FaultTrace::cores() const noexcept {
  std::uint32_t n = meta.core_count;
  for (const TraceRecord& r : records) n = std::max(n, r.core + 1);
  return n;
}

TraceError::TraceError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
  if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf, ptr);
}

void apply_comment(std::string_view body, TraceMetadata& meta, std::size_t line) {
  const auto colon = body.find(':');
  if (colon == std::string_view::npos) return;
  const std::string_view key = trim(body.substr(0, colon));
  const std::string_view value = trim(body.substr(colon + 1));
  if (key == "source") {
    meta.source = std::string(value);
  } else if (key == "core_count") {
    auto v = parse_number<std::uint32_t>(value);
    if (!v) throw TraceError(line, "bad core_count '" + std::string(value) + "'");
    meta.core_count = *v;
  } else if (key == "total_runtime_ns") {
    auto v = parse_number<double>(value);
    if (!v || !std::isfinite(*v) || *v < 0) throw TraceError(line, "bad total_runtime_ns '" + std::string(value) + "'");
    meta.total_runtime_ns = *v;
  }
}

}  // namespace

FaultTrace parse_trace(std::istream& in) {
  FaultTrace trace;
  std::map<CoreId, double> last;
  bool header_seen = false;
  std::string raw_line;
  std::size_t line = 0;
  while (std::getline(in, raw_line)) {
    ++line;
    std::string_view s = trim(raw_line);
    if (line == 1 && s.substr(0, 3) == "\xEF\xBB\xBF") s.remove_prefix(3);
    if (s.empty()) continue;
    if (s.front() == '#') {
      apply_comment(s.substr(1), trace.meta, line);
      continue;
    }
    if (!header_seen) {
      if (s != kTraceHeader) throw TraceError(line, "expected header '" + std::string(kTraceHeader) + "'");
      header_seen = true;
      continue;
    }
    const auto c1 = s.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : s.find(',', c1 + 1);
    if (c2 == std::string_view::npos || s.find(',', c2 + 1) != std::string_view::npos) {
      throw TraceError(line, "expected 3 comma-separated fields");
    }
    const auto ts = parse_number<double>(s.substr(0, c1));
    const auto core = parse_number<std::uint32_t>(s.substr(c1 + 1, c2 - c1 - 1));
    const auto lat = parse_number<double>(s.substr(c2 + 1));
    if (!ts || !std::isfinite(*ts) || *ts < 0) throw TraceError(line, "bad timestamp");
    if (!core) throw TraceError(line, "bad core id");
    if (!lat || !std::isfinite(*lat) || *lat <= 0) throw TraceError(line, "latency must be a positive number");
    auto [it, fresh] = last.try_emplace(*core, *ts);
    if (!fresh) {
      if (*ts < it->second) throw TraceError(line, "timestamp goes backwards on core " + std::to_string(*core));
      it->second = *ts;
    }
    trace.records.push_back({*ts, *core, *lat});
  }
  if (trace.meta.core_count != 0 && trace.cores() > trace.meta.core_count) {
    throw TraceError(line, "core id beyond declared core_count");
  }
  return trace;
}

FaultTrace ingest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace '" + path.string() + "'");
  return parse_trace(in);
}

void write_trace(std::ostream& out, const FaultTrace& trace) {
  if (!trace.meta.source.empty()) out << "# source: " << trace.meta.source << '\n';
  out << "# core_count: " << trace.meta.core_count << '\n';
  out << "# total_runtime_ns: " << format_double(trace.meta.total_runtime_ns) << '\n';
  out << kTraceHeader << '\n';
  for (const TraceRecord& r : trace.records) {
    out << format_double(r.timestamp_ns) << ',' << r.core << ',' << format_double(r.latency_ns) << '\n';
  }
}

void write_trace(const std::filesystem::path& path, const FaultTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace '" + path.string() + "'");
  write_trace(out, trace);
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Model

std::vector<std::string> MfoeConfig::violations() const {
  std::vector<std::string> v;
  if (table_width == 0 || table_width > 65535) v.emplace_back("table width must be in [1, 65535]");
  if (!(refresh_interval_ms > 0) || !std::isfinite(refresh_interval_ms)) v.emplace_back("refresh interval must be positive");
  return v;
}

std::vector<CycleFault> to_cycles(const FaultTrace& trace, const ModelParameters& params) {
  std::vector<CycleFault> out;
  out.reserve(trace.records.size());
  for (const TraceRecord& r : trace.records) {
    out.push_back({r.core, params.ns_to_cycles(r.timestamp_ns), std::max<Cycles>(0, params.ns_to_cycles(r.latency_ns))});
  }
  return out;
}

Cycles bracket_runtime(const std::vector<Cycles>& starts, const std::vector<Cycles>& latencies) {
  if (starts.empty()) return 0;
  Cycles first = starts.front();
  Cycles last = starts.front() + latencies.front();
  for (std::size_t i = 1; i < starts.size(); ++i) {
    first = std::min(first, starts[i]);
    last = std::max(last, starts[i] + latencies[i]);
  }
  return last - first;
}

namespace {

/// Frame counts per core plus the fill and refresh schedule.
class TableOccupancy {
 public:
  TableOccupancy(std::uint32_t cores, std::uint32_t capacity, bool stocked, Cycles refresh, const ModelParameters& p)
      : avail_(cores, stocked ? capacity : 0),
        capacity_(capacity),
        fill_pages_(stocked ? 0 : std::int64_t{cores} * capacity),
        refresh_(refresh),
        params_(p) {
    fill_done_ = cycles_for_pages(fill_pages_, p.init_throughput_pages_per_s, p.clock_hz);
  }

  /// Applies every fill page and refresh tick scheduled at or before `now`.
  void advance(Cycles now) {
    if (filled_ < fill_pages_) {
      const std::int64_t ready =
          std::min(fill_pages_, pages_completed(now, params_.init_throughput_pages_per_s, params_.clock_hz));
      for (; filled_ < ready; ++filled_) ++avail_[static_cast<std::size_t>(filled_ / capacity_)];
    }
    while (fill_done_ + static_cast<Cycles>(ticks_ + 1) * refresh_ <= now) tick();
  }

  bool take(CoreId core) {
    if (avail_[core] == 0) return false;
    --avail_[core];
    return true;
  }

 private:
  void tick() {
    const std::uint64_t j = ++ticks_;
    const double rate = params_.background_throughput_pages_per_s;
    std::int64_t budget = pages_completed(static_cast<Cycles>(j) * refresh_, rate, params_.clock_hz) -
                          pages_completed(static_cast<Cycles>(j - 1) * refresh_, rate, params_.clock_hz);
    const auto cores = static_cast<std::uint32_t>(avail_.size());
    const auto first = static_cast<CoreId>((j - 1) % cores);
    for (std::uint32_t i = 0; i < cores && budget > 0; ++i) {
      std::uint32_t& a = avail_[(first + i) % cores];
      const std::int64_t add = std::min<std::int64_t>(budget, capacity_ - a);
      a += static_cast<std::uint32_t>(add);
      budget -= add;
    }
  }

  std::vector<std::uint32_t> avail_;
  std::uint32_t capacity_;
  std::int64_t fill_pages_;
  std::int64_t filled_ = 0;
  Cycles fill_done_ = 0;
  Cycles refresh_;
  std::uint64_t ticks_ = 0;
  const ModelParameters& params_;
};

}  // namespace

ModelReport apply_model(const FaultTrace& trace, const MfoeConfig& config, const ModelParameters& params) {
  params.validate();
  if (auto v = config.violations(); !v.empty()) throw std::invalid_argument("invalid model config: " + v.front());

  ModelReport rep;
  rep.config = config;
  rep.cores = config.cores != 0 ? config.cores : std::max<std::uint32_t>(1, trace.cores());
  if (trace.cores() > rep.cores) throw std::invalid_argument("trace uses more cores than configured");
  rep.faults = trace.records.size();
  if (trace.records.empty()) return rep;

  const std::vector<CycleFault> f = to_cycles(trace, params);
  const Cycles hit = params.hit_cycles();
  const Cycles penalty = params.miss_penalty_cycles();
  const Cycles refresh = std::llround(config.refresh_interval_ms * 1e-3 * params.clock_hz);
  if (refresh <= 0) throw std::invalid_argument("refresh interval shorter than one cycle");

  std::vector<std::vector<std::size_t>> per_core(rep.cores);
  for (std::size_t i = 0; i < f.size(); ++i) per_core[f[i].core].push_back(i);
  for (auto& q : per_core) {
    std::stable_sort(q.begin(), q.end(), [&](std::size_t a, std::size_t b) { return f[a].time < f[b].time; });
  }

  TableOccupancy tables(rep.cores, config.table_width - 1, config.initially_stocked, refresh, params);
  std::vector<Cycles> offset(rep.cores, 0);
  std::vector<std::size_t> next(rep.cores, 0);
  std::vector<Cycles> shifted(f.size());
  std::vector<Cycles> modeled(f.size());
  std::vector<bool> was_hit(f.size());

  using Head = std::pair<Cycles, CoreId>;
  std::priority_queue<Head, std::vector<Head>, std::greater<>> ready;
  for (CoreId c = 0; c < rep.cores; ++c) {
    if (!per_core[c].empty()) ready.emplace(f[per_core[c].front()].time, c);
  }

  while (!ready.empty()) {
    const auto [s, c] = ready.top();
    ready.pop();
    const std::size_t i = per_core[c][next[c]];
    tables.advance(s);
    shifted[i] = s;
    if (tables.take(c)) {
      was_hit[i] = true;
      modeled[i] = hit;
      offset[c] -= f[i].latency - hit;
      rep.time_saved += f[i].latency - hit;
      ++rep.hits;
    } else {
      modeled[i] = f[i].latency + penalty;
      offset[c] += penalty;
      rep.penalty += penalty;
      ++rep.misses;
    }
    if (++next[c] < per_core[c].size()) {
      // A fault never moves ahead of the one before it on the same core.
      const std::size_t n = per_core[c][next[c]];
      ready.emplace(std::max(f[n].time + offset[c], s), c);
    }
  }

  std::vector<Cycles> t0(f.size());
  std::vector<Cycles> l0(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    t0[i] = f[i].time;
    l0[i] = f[i].latency;
  }
  rep.baseline_runtime = bracket_runtime(t0, l0);
  rep.modeled_runtime = bracket_runtime(shifted, modeled);
  rep.hit_rate = static_cast<double>(rep.hits) / static_cast<double>(f.size());
  rep.speedup = rep.modeled_runtime > 0 && rep.baseline_runtime > 0
                    ? static_cast<double>(rep.baseline_runtime) / static_cast<double>(rep.modeled_runtime)
                    : 1.0;

  std::set<CoreId> active;
  long double base_sum = 0;
  long double model_sum = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    active.insert(f[i].core);
    base_sum += l0[i];
    model_sum += modeled[i];
  }
  const auto n_active = static_cast<long double>(active.size());
  if (rep.baseline_runtime > 0) rep.baseline_overhead_fraction = static_cast<double>(base_sum / (n_active * rep.baseline_runtime));
  if (rep.modeled_runtime > 0) rep.residual_overhead_fraction = static_cast<double>(model_sum / (n_active * rep.modeled_runtime));

  if (config.keep_timeline) {
    rep.timeline.reserve(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      rep.timeline.push_back({i, f[i].core, t0[i], shifted[i], l0[i], modeled[i], was_hit[i]});
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Synthesis

std::string_view to_string(Arrival a) { return a == Arrival::Uniform ? "uniform" : "poisson"; }

Arrival arrival_from_string(std::string_view s) {
  if (s == "uniform") return Arrival::Uniform;
  if (s == "poisson") return Arrival::Poisson;
  throw std::invalid_argument("unknown distribution '" + std::string(s) + "' (expected uniform or poisson)");
}

std::string_view to_string(LatencyShape s) { return s == LatencyShape::Constant ? "constant" : "lognormal"; }

LatencyShape latency_shape_from_string(std::string_view s) {
  if (s == "constant") return LatencyShape::Constant;
  if (s == "lognormal") return LatencyShape::Lognormal;
  throw std::invalid_argument("unknown latency shape '" + std::string(s) + "' (expected constant or lognormal)");
}

std::vector<std::string> SynthSpec::violations() const {
  std::vector<std::string> v;
  if (!(rate_per_core > 0) || !std::isfinite(rate_per_core)) v.emplace_back("rate must be positive");
  if (!(duration_s > 0) || !std::isfinite(duration_s)) v.emplace_back("duration must be positive");
  if (cores == 0) v.emplace_back("cores must be at least 1");
  if (!(latency_mean_ns > 0) || !std::isfinite(latency_mean_ns)) v.emplace_back("latency mean must be positive");
  if (latency_p95_ns != 0 && !(latency_p95_ns >= latency_mean_ns)) v.emplace_back("latency p95 must be at least the mean");
  if (v.empty() && rate_per_core * duration_s * cores > 2e8) v.emplace_back("trace would exceed 2e8 faults");
  return v;
}

const std::vector<WorkloadProfile>& workload_profiles() {
  static const std::vector<WorkloadProfile> profiles = {
      {"gcc", 365.31, 29.09},      {"faas", 108.92, 9.05},    {"dedup", 165.88, 8.26},
      {"memcached", 120.06, 6.47}, {"radix", 259.25, 16.17},  {"fft", 222.62, 10.06},
      {"xsbench", 89.09, 4.90},    {"gap-bc", 77.74, 3.08},   {"intsort", 104.91, 4.20},
  };
  return profiles;
}

std::optional<WorkloadProfile> find_profile(std::string_view name) {
  for (const auto& p : workload_profiles()) {
    if (p.name == name) return p;
  }
  return std::nullopt;
}

SynthSpec profile_spec(const WorkloadProfile& p) {
  SynthSpec s;
  s.rate_per_core = p.kfaults_per_s * 1e3;
  s.latency_mean_ns = p.latency_mean_ns();
  s.source = std::string(p.name);
  return s;
}

FaultTrace synthesize(const SynthSpec& spec) {
  if (auto v = spec.violations(); !v.empty()) throw std::invalid_argument("invalid synthesis spec: " + v.front());

  std::seed_seq arrival_seed{spec.seed, std::uint64_t{1}};
  std::seed_seq latency_seed{spec.seed, std::uint64_t{2}};
  std::mt19937_64 arrival_rng(arrival_seed);
  std::mt19937_64 latency_rng(latency_seed);

  const double horizon_ns = spec.duration_s * 1e9;
  const double gap_ns = 1e9 / spec.rate_per_core;
  FaultTrace t;
  for (CoreId c = 0; c < spec.cores; ++c) {
    if (spec.arrival == Arrival::Uniform) {
      // Evenly spaced, each core staggered within the slot.
      const auto n = static_cast<std::uint64_t>(std::floor(spec.rate_per_core * spec.duration_s + 1e-9));
      const double phase = (c + 0.5) / spec.cores;
      for (std::uint64_t k = 0; k < n; ++k) t.records.push_back({(static_cast<double>(k) + phase) * gap_ns, c, 0});
    } else {
      std::exponential_distribution<double> gap(1.0 / gap_ns);
      for (double ts = gap(arrival_rng); ts < horizon_ns; ts += gap(arrival_rng)) t.records.push_back({ts, c, 0});
    }
  }
  std::stable_sort(t.records.begin(), t.records.end(), [](const TraceRecord& a, const TraceRecord& b) {
    return std::tie(a.timestamp_ns, a.core) < std::tie(b.timestamp_ns, b.core);
  });

  if (spec.shape == LatencyShape::Constant) {
    for (TraceRecord& r : t.records) r.latency_ns = spec.latency_mean_ns;
  } else {
    const double p95 = spec.latency_p95_ns != 0
                           ? spec.latency_p95_ns
                           : spec.latency_mean_ns * (ModelParameters{}.baseline_fault_p95_cycles /
                                                     ModelParameters{}.baseline_fault_mean_cycles);
    const LatencyDistribution d = LatencyDistribution::lognormal(spec.latency_mean_ns, p95);
    for (TraceRecord& r : t.records) r.latency_ns = d.sample(latency_rng);
  }

  t.meta.total_runtime_ns = horizon_ns;
  t.meta.core_count = spec.cores;
  t.meta.source = spec.source;
  return t;
}

double overhead_fraction(const FaultTrace& trace) {
  if (trace.records.empty()) return 0;
  double first = trace.records.front().timestamp_ns;
  double last = first;
  long double sum = 0;
  std::set<CoreId> active;
  for (const TraceRecord& r : trace.records) {
    first = std::min(first, r.timestamp_ns);
    last = std::max(last, r.timestamp_ns + r.latency_ns);
    sum += r.latency_ns;
    active.insert(r.core);
  }
  if (last <= first) return 0;
  return static_cast<double>(sum / (static_cast<long double>(active.size()) * (last - first)));
}

// ---------------------------------------------------------------------------
// Sweep

std::vector<SweepCell> sweep(const FaultTrace& trace, const std::vector<std::uint32_t>& widths,
                             const std::vector<double>& intervals_ms, const ModelParameters& params,
                             std::uint32_t cores, unsigned workers) {
  if (widths.empty() || intervals_ms.empty()) throw std::invalid_argument("sweep grids must be non-empty");
  std::vector<SweepCell> cells;
  for (std::uint32_t w : widths) {
    for (double i : intervals_ms) {
      MfoeConfig cfg;
      cfg.table_width = w;
      cfg.refresh_interval_ms = i;
      cfg.cores = cores;
      cfg.keep_timeline = false;
      if (auto v = cfg.violations(); !v.empty()) throw std::invalid_argument("invalid sweep cell: " + v.front());
      cells.push_back({w, i, {}});
    }
  }

  std::atomic<std::size_t> cursor{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t k = cursor++; k < cells.size(); k = cursor++) {
      try {
        MfoeConfig cfg;
        cfg.table_width = cells[k].width;
        cfg.refresh_interval_ms = cells[k].interval_ms;
        cfg.cores = cores;
        cfg.keep_timeline = false;
        cells[k].report = apply_model(trace, cfg, params);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1U, std::min<unsigned>(workers, static_cast<unsigned>(cells.size())));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < n; ++i) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return cells;
}

}  // namespace mfoesim
