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

#include "mfoesim/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <stdexcept>
#include <tuple>

namespace mfoesim {

std::string_view to_string(SimMode m) {
  switch (m) {
    case SimMode::Hardware: return "hardware";
    case SimMode::Software: return "software";
    case SimMode::Baseline: return "baseline";
  }
  return "unknown";
}

SimMode sim_mode_from_string(std::string_view s) {
  if (s == "hardware") return SimMode::Hardware;
  if (s == "software") return SimMode::Software;
  if (s == "baseline") return SimMode::Baseline;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "' (expected hardware, software or baseline)");
}

std::uint64_t SimConfig::effective_total_frames() const noexcept {
  if (total_frames != 0) return total_frames;
  // Room for every fault plus a few full sets of tables, well clear of the
  // memory-pressure threshold.
  const std::uint64_t demand = std::uint64_t{workload.threads} * workload.faults_per_thread +
                               std::uint64_t{effective_cores()} * table_entries;
  return 2 * demand + 4096;
}

std::vector<std::string> SimConfig::violations() const {
  std::vector<std::string> v = params.violations();
  const WorkloadSpec& w = workload;
  if (w.threads == 0) v.emplace_back("threads must be at least 1");
  if (w.faults_per_thread == 0) v.emplace_back("faults per thread must be at least 1");
  if (w.stride == 0) v.emplace_back("stride must be at least 1");
  if (w.interarrival_cycles < 0) v.emplace_back("interarrival must not be negative");
  if (w.threads != 0 && w.faults_per_thread != 0 && w.stride != 0) {
    if (w.region_pages != 0 && w.region_pages < w.pages_needed()) {
      v.emplace_back("region pages too small for faults per thread x stride");
    }
    const std::uint64_t span = std::max(w.region_pages, w.pages_needed()) + 1;
    if (span > (std::uint64_t{1} << 34) / w.threads) v.emplace_back("regions exceed the user address space");
  }
  if (cores != 0 && cores < w.threads) v.emplace_back("cores must be at least threads (one thread per core)");
  if (tlb_entries == 0) v.emplace_back("tlb entries must be at least 1");
  if (table_entries == 0 || table_entries > PreallocTable::kMaxEntries) {
    v.emplace_back("table width must be in [1, 65535]");
  }
  if (!(refresh_interval_ms > 0) || !std::isfinite(refresh_interval_ms)) {
    v.emplace_back("refresh interval must be positive");
  }
  if (numa_nodes == 0) v.emplace_back("numa nodes must be at least 1");
  if (numa_nodes > effective_total_frames()) v.emplace_back("more NUMA nodes than frames");
  if (!(quota_threshold > 0) || !std::isfinite(quota_threshold)) v.emplace_back("quota threshold must be positive");
  if (!(prefault_throughput_pages_per_s > 0) || !std::isfinite(prefault_throughput_pages_per_s)) {
    v.emplace_back("pre-fault throughput must be positive");
  }
  return v;
}

void SimConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid simulation config:";
  for (const auto& s : v) msg += "\n  " + s;
  throw std::invalid_argument(msg);
}

LatencySummary summarize(std::vector<Cycles> latencies) {
  LatencySummary s;
  s.count = latencies.size();
  if (latencies.empty()) return s;
  std::sort(latencies.begin(), latencies.end());
  long double sum = 0;
  for (Cycles c : latencies) sum += c;
  s.mean = static_cast<double>(sum / latencies.size());
  // Nearest-rank percentile.
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(latencies.size())));
  s.p95 = latencies[std::max<std::size_t>(rank, 1) - 1];
  s.max = latencies.back();
  return s;
}

namespace {

enum class EventType { Complete, Access };  // completions first at equal times

using Event = std::tuple<Cycles, EventType, CoreId>;

bool is_resolved(FaultKind k) {
  switch (k) {
    case FaultKind::MfoeHit:
    case FaultKind::MfoeMiss:
    case FaultKind::NonMfoeable:
    case FaultKind::KernelFault:
    case FaultKind::SoftwareHit:
    case FaultKind::SoftwareMiss:
      return true;
    default:
      return false;
  }
}

class Simulation {
 public:
  explicit Simulation(const SimConfig& cfg)
      : cfg_(cfg),
        kernel_(cfg.params, kernel_config(cfg), cfg.seed),
        mmu_(kernel_.mmu()),
        tgid_(kernel_.create_process()),
        threads_(cfg.workload.threads),
        acct_(cfg.effective_cores()) {
    const WorkloadSpec& w = cfg.workload;
    if (cfg.mode != SimMode::Baseline) kernel_.mfoe_enable(tgid_, cfg.table_entries, 0);
    const std::uint64_t pages = w.region_pages != 0 ? w.region_pages : w.pages_needed();
    for (auto& t : threads_) t.region = kernel_.region_create(tgid_, pages, true, 0).start;
    space_ = &kernel_.process(tgid_).space;
  }

  SimReport run() {
    const Cycles gap = cfg_.workload.interarrival_cycles;
    for (CoreId c = 0; c < threads_.size(); ++c) schedule_access(c, 0, gap);

    while (!queue_.empty()) {
      const auto [now, type, core] = queue_.top();
      queue_.pop();
      kernel_.catch_up(now);
      if (type == EventType::Complete) {
        complete(core, now);
      } else {
        access(core, now);
      }
    }
    return report();
  }

 private:
  struct ThreadState {
    VirtualAddress region;
    std::uint64_t next = 0;
    bool software_inflight = false;
  };

  static KernelConfig kernel_config(const SimConfig& cfg) {
    KernelConfig k;
    k.cores = cfg.effective_cores();
    k.numa_nodes = cfg.numa_nodes;
    k.total_frames = cfg.effective_total_frames();
    k.tlb_entries = cfg.tlb_entries;
    k.refresh_interval_ms = cfg.refresh_interval_ms;
    k.quota_threshold = cfg.quota_threshold;
    k.prefault_throughput_pages_per_s = cfg.prefault_throughput_pages_per_s;
    k.hardware_mfoe = cfg.mode == SimMode::Hardware;
    return k;
  }

  VirtualAddress target(CoreId core) const {
    const ThreadState& t = threads_[core];
    return VirtualAddress{t.region.value() + t.next * cfg_.workload.stride * kPageSize};
  }

  void schedule_access(CoreId core, Cycles now, Cycles gap) {
    acct_[core].compute += gap;
    queue_.emplace(now + gap, EventType::Access, core);
  }

  void record(CoreId core, Cycles now, FaultKind kind, Cycles latency) {
    faults_.push_back({now, core, kind, latency});
    ++outcomes_[static_cast<std::size_t>(kind)];
  }

  void charge(CoreId core, Cycles now, FaultKind kind, Cycles cycles) {
    record(core, now, kind, cycles);
    acct_[core].fault_overhead += cycles;
    ++acct_[core].faults;
    queue_.emplace(now + cycles, EventType::Complete, core);
  }

  void access(CoreId core, Cycles now) {
    const VirtualAddress va = target(core);
    std::optional<SeOutcome> se;
    if (cfg_.mode == SimMode::Software && !mmu_.tlb(core).lookup(tgid_, va.page_number())) {
      se = kernel_.mfoe_se(tgid_, core, va, true);
      if (se->resolved()) {
        threads_[core].software_inflight = true;
        charge(core, now, FaultKind::SoftwareHit, se->cycles);
        return;
      }
    }

    const FaultOutcome o = mmu_.access(core, *space_, va, true, now);
    if (mmu_.in_flight(core)) {
      FaultKind kind = o.kind;
      if (se && se->error == SeError::TableEmpty) kind = FaultKind::SoftwareMiss;
      charge(core, now, kind, o.cycles);
      return;
    }
    if (o.kind == FaultKind::LockWait && o.stall_cycles > 0) {
      record(core, now, FaultKind::LockWait, o.stall_cycles);
      acct_[core].stall += o.stall_cycles;
      queue_.emplace(now + o.stall_cycles, EventType::Access, core);
      return;
    }
    if (o.kind != FaultKind::TlbHit) record(core, now, o.kind, 0);
    finish(core, now);
  }

  void complete(CoreId core, Cycles now) {
    ThreadState& t = threads_[core];
    if (t.software_inflight) {
      // The retried access misses the TLB once more and walks to the new PTE.
      t.software_inflight = false;
      mmu_.access(core, *space_, target(core), true, now);
    } else {
      mmu_.retire(core);
    }
    finish(core, now);
  }

  void finish(CoreId core, Cycles now) {
    const VirtualAddress va = target(core);
    for (std::uint64_t i = 0; i < cfg_.workload.redundant_accesses; ++i) {
      mmu_.access(core, *space_, VirtualAddress{va.value() + (i * 64) % kPageSize}, true, now);
      ++redundant_;
    }
    ThreadState& t = threads_[core];
    if (++t.next == cfg_.workload.faults_per_thread) {
      acct_[core].end_time = now;
      return;
    }
    schedule_access(core, now, cfg_.workload.interarrival_cycles);
  }

  SimReport report() {
    SimReport r;
    r.config = cfg_;
    r.outcomes = outcomes_;
    auto count = [&](FaultKind k) { return outcomes_[static_cast<std::size_t>(k)]; };
    r.hits = count(FaultKind::MfoeHit) + count(FaultKind::SoftwareHit);
    r.misses = count(FaultKind::MfoeMiss) + count(FaultKind::SoftwareMiss);
    r.hit_rate = r.hits + r.misses == 0 ? 0.0 : static_cast<double>(r.hits) / static_cast<double>(r.hits + r.misses);

    std::vector<Cycles> all;
    std::vector<Cycles> hit;
    for (const FaultRecord& f : faults_) {
      if (!is_resolved(f.kind)) continue;
      all.push_back(f.latency);
      if (f.kind == FaultKind::MfoeHit || f.kind == FaultKind::SoftwareHit) hit.push_back(f.latency);
    }
    r.fault_latency = summarize(std::move(all));
    r.hit_latency = summarize(std::move(hit));
    if (r.hit_latency.count > 0) r.critical_path_speedup = cfg_.params.baseline_fault_mean_cycles / r.hit_latency.mean;

    for (const CoreAccount& a : acct_) {
      r.total_fault_overhead += a.fault_overhead;
      r.total_stall += a.stall;
      r.makespan = std::max(r.makespan, a.end_time);
    }
    r.redundant_accesses = redundant_;
    r.cores = acct_;
    r.faults = std::move(faults_);
    r.kernel = kernel_.stats();
    r.census = kernel_.frame_census();
    return r;
  }

  const SimConfig& cfg_;
  KernelModel kernel_;
  Mmu& mmu_;
  Tgid tgid_;
  AddressSpace* space_ = nullptr;
  std::vector<ThreadState> threads_;
  std::vector<CoreAccount> acct_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::vector<FaultRecord> faults_;
  std::array<std::uint64_t, kFaultKindCount> outcomes_{};
  std::uint64_t redundant_ = 0;
};

}  // namespace

SimReport run(const SimConfig& config) {
  config.validate();
  Simulation sim(config);
  return sim.run();
}

SimReport replay_seeded(SimConfig config, std::uint64_t seed) {
  config.seed = seed;
  return run(config);
}

}  // namespace mfoesim
