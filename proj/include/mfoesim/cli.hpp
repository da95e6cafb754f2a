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

// Command-line front end. Every setting is a flat key with a default; the
// same key works as a `--key value` flag or as a `key = value` line in the
// config file. Precedence: defaults, then the config file (from --config
// or $MFOESIM_CONFIG), then flags.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfoesim/params.hpp"
#include "mfoesim/sim_engine.hpp"
#include "mfoesim/trace_model.hpp"

namespace mfoesim {

inline constexpr const char* kConfigEnvVar = "MFOESIM_CONFIG";

struct Config {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  ModelParameters params;

  // simulate
  std::uint32_t threads = 1;
  std::uint32_t cores = 0;
  std::size_t tlb_entries = 64;
  std::uint32_t table_width = 256;
  double refresh_interval_ms = 2.0;
  std::uint64_t faults_per_thread = 32768;
  std::uint64_t region_pages = 0;
  std::uint64_t stride = 1;
  std::uint64_t redundant_accesses = 0;
  std::int64_t interarrival = 21000;
  std::string mode = "hardware";
  std::uint32_t numa_nodes = 1;
  std::uint64_t total_frames = 0;
  double quota_threshold = 0.8;
  double prefault_throughput = 20e6;

  // model, sweep
  std::string trace;
  bool initially_stocked = false;
  std::vector<std::uint32_t> widths = kDefaultWidths;
  std::vector<double> intervals = kDefaultIntervalsMs;
  unsigned workers = 1;

  // synthesize (and sweep without --trace)
  double rate = 100000;
  double duration = 1.0;
  std::string dist = "uniform";
  std::uint32_t synth_cores = 1;
  double latency_ns = 0;      // 0: the baseline fault mean
  double latency_p95_ns = 0;  // 0: mean times the baseline p95/mean ratio
  std::string latency_shape = "lognormal";
  std::string profile;
  std::string output;

  // Set when rate / latency-ns came from the user, so a profile does not
  // overwrite them.
  bool rate_given = false;
  bool latency_given = false;

  SimConfig sim_config() const;
  MfoeConfig model_config() const;
  SynthSpec synth_spec() const;
  std::vector<std::string> violations() const;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::vector<std::filesystem::path> cmd_simulate(const Config& cfg, std::ostream& out);
std::vector<std::filesystem::path> cmd_model(const Config& cfg, std::ostream& out);
std::vector<std::filesystem::path> cmd_sweep(const Config& cfg, std::ostream& out);
std::vector<std::filesystem::path> cmd_synthesize(const Config& cfg, std::ostream& out);

/// Full command line including argv[0]. Returns the process exit code:
/// 0 when the run completed and its outputs validated, 2 for usage or
/// configuration errors, 1 for anything else.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mfoesim
