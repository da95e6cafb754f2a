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

#include "mfoesim/cli.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include <CLI11.hpp>

#include "mfoesim/report.hpp"

namespace fs = std::filesystem;

namespace mfoesim {

// ---------------------------------------------------------------------------
// Config

SimConfig Config::sim_config() const {
  SimConfig s;
  s.params = params;
  s.workload.threads = threads;
  s.workload.region_pages = region_pages;
  s.workload.stride = stride;
  s.workload.redundant_accesses = redundant_accesses;
  s.workload.faults_per_thread = faults_per_thread;
  s.workload.interarrival_cycles = interarrival;
  s.mode = sim_mode_from_string(mode);
  s.cores = cores;
  s.tlb_entries = tlb_entries;
  s.table_entries = table_width;
  s.refresh_interval_ms = refresh_interval_ms;
  s.numa_nodes = numa_nodes;
  s.total_frames = total_frames;
  s.quota_threshold = quota_threshold;
  s.prefault_throughput_pages_per_s = prefault_throughput;
  s.seed = seed;
  return s;
}

MfoeConfig Config::model_config() const {
  MfoeConfig m;
  m.table_width = table_width;
  m.refresh_interval_ms = refresh_interval_ms;
  m.cores = cores;
  m.initially_stocked = initially_stocked;
  return m;
}

SynthSpec Config::synth_spec() const {
  SynthSpec s;
  if (!profile.empty()) {
    const auto p = find_profile(profile);
    if (!p) throw ConfigError("unknown profile '" + profile + "'");
    s = profile_spec(*p);
  }
  if (profile.empty() || rate_given) s.rate_per_core = rate;
  if (profile.empty() || latency_given) {
    s.latency_mean_ns = latency_ns != 0 ? latency_ns : params.baseline_fault_mean_cycles * 1e9 / params.clock_hz;
  }
  s.latency_p95_ns = latency_p95_ns;
  s.duration_s = duration;
  s.arrival = arrival_from_string(dist);
  s.shape = latency_shape_from_string(latency_shape);
  s.cores = synth_cores;
  s.seed = seed;
  return s;
}

std::vector<std::string> Config::violations() const {
  std::vector<std::string> v;
  auto guard = [&v](auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      v.emplace_back(e.what());
    }
  };
  guard([&] {
    for (auto& s : sim_config().violations()) v.push_back(std::move(s));
  });
  for (auto& s : model_config().violations()) v.push_back(std::move(s));
  guard([&] {
    for (auto& s : synth_spec().violations()) v.push_back(std::move(s));
  });
  if (widths.empty()) v.emplace_back("widths must not be empty");
  for (auto w : widths) {
    if (w == 0 || w > 65535) v.emplace_back("every width must be in [1, 65535]");
  }
  if (intervals.empty()) v.emplace_back("intervals must not be empty");
  for (double i : intervals) {
    if (!(i > 0) || !std::isfinite(i)) v.emplace_back("every interval must be positive");
  }
  if (workers == 0) v.emplace_back("workers must be at least 1");
  if (out_dir.empty()) v.emplace_back("out-dir must not be empty");
  // Simulator and model share some keys; report each problem once.
  std::vector<std::string> unique;
  for (auto& s : v) {
    if (std::find(unique.begin(), unique.end(), s) == unique.end()) unique.push_back(std::move(s));
  }
  return unique;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

void check_outputs(const std::vector<std::string>& errors) {
  if (errors.empty()) return;
  std::string msg = "output validation failed:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw std::runtime_error(msg);
}

void append(std::vector<std::string>& into, std::vector<std::string> more) {
  for (auto& m : more) into.push_back(std::move(m));
}

fs::path prepare_out_dir(const Config& cfg) {
  fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  return dir;
}

FaultTrace load_trace(const Config& cfg) {
  if (cfg.trace.empty()) throw ConfigError("this command needs --trace");
  return ingest(cfg.trace);
}

}  // namespace

std::vector<fs::path> cmd_simulate(const Config& cfg, std::ostream& out) {
  const SimReport r = run(cfg.sim_config());
  const fs::path dir = prepare_out_dir(cfg);
  const fs::path report = dir / "sim_report.json";
  const fs::path faults = dir / "sim_faults.csv";
  write_json(report, sim_report_json(r));
  write_sim_faults_csv(faults, r);

  std::vector<std::string> errors = validate_json_file(report, sim_report_schema());
  append(errors, validate_csv_file(faults, kSimFaultsHeader, r.faults.size()));
  check_outputs(errors);

  out << std::fixed << std::setprecision(4);
  out << "mode " << to_string(r.config.mode) << ", " << r.config.workload.threads << " thread(s), "
      << r.config.workload.faults_per_thread << " faults each\n";
  out << "hit rate          " << r.hit_rate << " (" << r.hits << " hits, " << r.misses << " misses)\n";
  out << std::setprecision(1);
  out << "fault latency     mean " << r.fault_latency.mean << " cycles, p95 " << r.fault_latency.p95 << "\n";
  out << "hit latency       mean " << r.hit_latency.mean << " cycles\n";
  out << std::setprecision(2);
  out << "critical path     " << r.critical_path_speedup << "x vs baseline mean\n";
  out << "fault overhead    " << r.total_fault_overhead << " cycles, stall " << r.total_stall << " cycles\n";
  out << "wrote " << report.string() << ", " << faults.string() << "\n";
  out.unsetf(std::ios::floatfield);
  return {report, faults};
}

std::vector<fs::path> cmd_model(const Config& cfg, std::ostream& out) {
  const FaultTrace trace = load_trace(cfg);
  const ModelReport r = apply_model(trace, cfg.model_config(), cfg.params);
  const fs::path dir = prepare_out_dir(cfg);
  const fs::path report = dir / "model_report.json";
  const fs::path timeline = dir / "model_timeline.csv";
  write_json(report, model_report_json(r, cfg.params, trace.meta));
  write_model_timeline_csv(timeline, r);

  std::vector<std::string> errors = validate_json_file(report, model_report_schema());
  append(errors, validate_csv_file(timeline, kTimelineHeader, r.timeline.size()));
  check_outputs(errors);

  out << std::fixed << std::setprecision(4);
  out << r.faults << " faults on " << r.cores << " core(s), width " << r.config.table_width << ", refresh "
      << r.config.refresh_interval_ms << " ms\n";
  out << "hit rate          " << r.hit_rate << "\n";
  out << "overhead          " << 100.0 * r.baseline_overhead_fraction << "% -> "
      << 100.0 * r.residual_overhead_fraction << "%\n";
  out << "speedup           " << r.speedup << "\n";
  out << "wrote " << report.string() << ", " << timeline.string() << "\n";
  out.unsetf(std::ios::floatfield);
  return {report, timeline};
}

std::vector<fs::path> cmd_sweep(const Config& cfg, std::ostream& out) {
  const FaultTrace trace = cfg.trace.empty() ? synthesize(cfg.synth_spec()) : ingest(cfg.trace);
  const auto cells = sweep(trace, cfg.widths, cfg.intervals, cfg.params, cfg.cores, cfg.workers);
  const fs::path dir = prepare_out_dir(cfg);
  const fs::path csv = dir / "sweep.csv";
  const fs::path report = dir / "sweep_report.json";
  write_sweep_csv(csv, cells);
  write_json(report, sweep_report_json(cells, cfg.params, trace.meta));

  std::vector<std::string> errors = validate_json_file(report, sweep_report_schema());
  append(errors, validate_csv_file(csv, kSweepHeader, cells.size()));
  check_outputs(errors);

  out << std::fixed << std::setprecision(3);
  out << "width  interval_ms  hit_rate  overhead_pct  speedup\n";
  for (const SweepCell& c : cells) {
    out << std::setw(5) << c.width << "  " << std::setw(11) << c.interval_ms << "  " << std::setw(8) << c.report.hit_rate
        << "  " << std::setw(12) << 100.0 * c.report.residual_overhead_fraction << "  " << std::setw(7) << c.report.speedup
        << "\n";
  }
  out << "wrote " << csv.string() << ", " << report.string() << "\n";
  out.unsetf(std::ios::floatfield);
  return {csv, report};
}

std::vector<fs::path> cmd_synthesize(const Config& cfg, std::ostream& out) {
  const FaultTrace trace = synthesize(cfg.synth_spec());
  fs::path path;
  if (cfg.output.empty()) {
    path = prepare_out_dir(cfg) / "trace.csv";
  } else {
    path = cfg.output;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
  }
  write_trace(path, trace);

  const FaultTrace back = ingest(path);
  if (back.records.size() != trace.records.size() || back.meta.core_count != trace.meta.core_count) {
    throw std::runtime_error("output validation failed: re-read trace differs from the generated one");
  }
  out << std::setprecision(4) << "generated " << trace.records.size() << " faults on " << trace.meta.core_count
      << " core(s), overhead " << 100.0 * overhead_fraction(trace) << "%\n";
  out << "wrote " << path.string() << "\n";
  return {path};
}

// ---------------------------------------------------------------------------
// Argument parsing

namespace {

void add_options(CLI::App& app, Config& c) {
  app.set_config("--config", "", "flat key = value file; keys are the long flag names")->envname(kConfigEnvVar);

  auto opt = [&app](const std::string& key, auto& var, const std::string& help) {
    return app.add_option("--" + key, var, help)->capture_default_str();
  };

  opt("seed", c.seed, "seed for every random draw");
  opt("out-dir", c.out_dir, "directory for reports");

  ModelParameters& p = c.params;
  opt("params-mfoe-hit-cycles", p.mfoe_hit_cycles, "MFOE hit latency");
  opt("params-mfoe-miss-penalty-cycles", p.mfoe_miss_penalty_cycles, "cycles wasted on an MFOE miss");
  opt("params-baseline-fault-mean-cycles", p.baseline_fault_mean_cycles, "kernel fault latency, mean");
  opt("params-baseline-fault-p95-cycles", p.baseline_fault_p95_cycles, "kernel fault latency, 95th percentile");
  opt("params-background-throughput-pages-per-s", p.background_throughput_pages_per_s, "refresh thread throughput");
  opt("params-init-throughput-pages-per-s", p.init_throughput_pages_per_s, "initial table fill throughput");
  opt("params-clock-hz", p.clock_hz, "core clock");
  opt("params-sw-emulation-mean-ns", p.sw_emulation_mean_ns, "software-emulated path latency, mean");
  opt("params-sw-emulation-p95-ns", p.sw_emulation_p95_ns, "software-emulated path latency, 95th percentile");

  opt("threads", c.threads, "benchmark threads, one per core");
  opt("cores", c.cores, "cores (0: one per thread, or from the trace)");
  opt("tlb-entries", c.tlb_entries, "TLB entries per core");
  opt("table-width", c.table_width, "pre-allocation table entries per core, header included");
  opt("refresh-interval-ms", c.refresh_interval_ms, "refresh thread period");
  opt("faults-per-thread", c.faults_per_thread, "faults each thread generates");
  opt("region-pages", c.region_pages, "pages per thread region (0: just enough)");
  opt("stride", c.stride, "pages between consecutive faults");
  opt("redundant-accesses", c.redundant_accesses, "non-faulting touches after each fault");
  opt("interarrival", c.interarrival, "compute cycles between a fault's completion and the next touch");
  opt("mode", c.mode, "hardware | software | baseline")->check(CLI::IsMember({"hardware", "software", "baseline"}));
  opt("numa-nodes", c.numa_nodes, "NUMA nodes");
  opt("total-frames", c.total_frames, "physical frames (0: sized from the workload)");
  opt("quota-threshold", c.quota_threshold, "usage fraction of the quota that disables MFOE");
  opt("prefault-throughput", c.prefault_throughput, "pre-fault thread pages per second");

  opt("trace", c.trace, "input trace CSV");
  opt("initially-stocked", c.initially_stocked, "model starts with full tables");
  opt("widths", c.widths, "sweep table widths")->delimiter(',');
  opt("intervals", c.intervals, "sweep refresh intervals in ms")->delimiter(',');
  opt("workers", c.workers, "parallel sweep workers");

  opt("rate", c.rate, "faults per second per core");
  opt("duration", c.duration, "trace length in seconds");
  opt("dist", c.dist, "uniform | poisson")->check(CLI::IsMember({"uniform", "poisson"}));
  opt("synth-cores", c.synth_cores, "cores in the synthesized trace");
  opt("latency-ns", c.latency_ns, "mean fault latency (0: baseline mean)");
  opt("latency-p95-ns", c.latency_p95_ns, "95th percentile latency (0: baseline ratio)");
  opt("latency-shape", c.latency_shape, "constant | lognormal")->check(CLI::IsMember({"constant", "lognormal"}));
  opt("profile", c.profile, "workload preset setting rate and latency");
  opt("output", c.output, "trace output path (default: <out-dir>/trace.csv)");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Minor-fault offload engine simulator and trace model", "mfoesim"};
  Config cfg;
  add_options(app, cfg);
  app.require_subcommand(1);
  CLI::App* simulate = app.add_subcommand("simulate", "run the strided-touch microbenchmark simulation");
  CLI::App* model = app.add_subcommand("model", "replay a fault trace against an MFOE configuration");
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "model hit rate and speedup over width x interval grids");
  CLI::App* synth = app.add_subcommand("synthesize", "generate a synthetic fault trace");
  for (CLI::App* sub : {simulate, model, sweep_cmd, synth}) sub->fallthrough();

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  cfg.rate_given = app.get_option("--rate")->count() > 0;
  cfg.latency_given = app.get_option("--latency-ns")->count() > 0;

  try {
    if (auto v = cfg.violations(); !v.empty()) {
      err << "configuration error:\n";
      for (const auto& s : v) err << "  " << s << "\n";
      return 2;
    }
    if (simulate->parsed()) cmd_simulate(cfg, out);
    if (model->parsed()) cmd_model(cfg, out);
    if (sweep_cmd->parsed()) cmd_sweep(cfg, out);
    if (synth->parsed()) cmd_synthesize(cfg, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const TraceError& e) {
    err << "trace error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace mfoesim
