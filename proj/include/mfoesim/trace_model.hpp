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

// Trace-driven performance model. A recorded (or synthesized) sequence of
// minor faults is replayed against per-core table occupancy: hits pull the
// rest of that core's faults earlier by the latency they save, misses push
// them later by the miss penalty.
//
// Table occupancy is tracked as a frame count per core. Tables start empty
// and are stocked core by core at the initialization rate; refresh ticks
// follow at a fixed interval, each refilling cores round-robin within the
// background thread's page budget.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mfoesim/params.hpp"
#include "mfoesim/vm_core.hpp"

namespace mfoesim {

struct TraceRecord {
  double timestamp_ns = 0;
  CoreId core = 0;
  double latency_ns = 0;

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct TraceMetadata {
  double total_runtime_ns = 0;
  std::uint32_t core_count = 0;
  std::string source;

  friend bool operator==(const TraceMetadata&, const TraceMetadata&) = default;
};

struct FaultTrace {
  std::vector<TraceRecord> records;
  TraceMetadata meta;

  /// Cores the model must track: metadata count or highest core id + 1.
  std::uint32_t cores() const noexcept;
  friend bool operator==(const FaultTrace&, const FaultTrace&) = default;
};

class TraceError : public std::runtime_error {
 public:
  TraceError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline constexpr std::string_view kTraceHeader = "timestamp_ns,core,latency_ns";

FaultTrace parse_trace(std::istream& in);
FaultTrace ingest(const std::filesystem::path& path);
void write_trace(std::ostream& out, const FaultTrace& trace);
void write_trace(const std::filesystem::path& path, const FaultTrace& trace);

struct MfoeConfig {
  std::uint32_t table_width = 256;  // entries per table, header included
  double refresh_interval_ms = 2.0;
  std::uint32_t cores = 0;          // 0: taken from the trace
  bool initially_stocked = false;   // tables full at trace start, no fill phase
  bool keep_timeline = true;

  std::vector<std::string> violations() const;
};

struct ShiftedFault {
  std::size_t index = 0;  // position in the input trace
  CoreId core = 0;
  Cycles original = 0;
  Cycles shifted = 0;
  Cycles original_latency = 0;
  Cycles modeled_latency = 0;
  bool hit = false;

  friend bool operator==(const ShiftedFault&, const ShiftedFault&) = default;
};

struct ModelReport {
  MfoeConfig config;
  std::uint32_t cores = 0;
  std::uint64_t faults = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  double hit_rate = 0;
  Cycles baseline_runtime = 0;
  Cycles modeled_runtime = 0;
  Cycles time_saved = 0;
  Cycles penalty = 0;
  double baseline_overhead_fraction = 0;
  double residual_overhead_fraction = 0;
  double speedup = 1;
  std::vector<ShiftedFault> timeline;  // input order
};

/// Fault records converted to whole cycles, in input order.
struct CycleFault {
  CoreId core = 0;
  Cycles time = 0;
  Cycles latency = 0;
};
std::vector<CycleFault> to_cycles(const FaultTrace& trace, const ModelParameters& params);

ModelReport apply_model(const FaultTrace& trace, const MfoeConfig& config, const ModelParameters& params);

/// Runtime of a timeline: last completion minus first start.
Cycles bracket_runtime(const std::vector<Cycles>& starts, const std::vector<Cycles>& latencies);

// Synthetic traces -----------------------------------------------------------

enum class Arrival { Uniform, Poisson };
enum class LatencyShape { Constant, Lognormal };

std::string_view to_string(Arrival a);
Arrival arrival_from_string(std::string_view s);
std::string_view to_string(LatencyShape s);
LatencyShape latency_shape_from_string(std::string_view s);

struct SynthSpec {
  double rate_per_core = 100000;  // faults per second
  double duration_s = 1.0;
  Arrival arrival = Arrival::Uniform;
  std::uint32_t cores = 1;
  double latency_mean_ns = 2552 / 3.0;
  double latency_p95_ns = 0;  // 0: mean scaled by the measured p95/mean ratio
  LatencyShape shape = LatencyShape::Lognormal;
  std::uint64_t seed = 1;
  std::string source = "synthetic";

  std::vector<std::string> violations() const;
};

/// Measured per-application fault rate and share of runtime spent in faults.
struct WorkloadProfile {
  std::string_view name;
  double kfaults_per_s;
  double overhead_pct;

  double latency_mean_ns() const noexcept { return overhead_pct / 100.0 * 1e9 / (kfaults_per_s * 1e3); }
};

const std::vector<WorkloadProfile>& workload_profiles();
std::optional<WorkloadProfile> find_profile(std::string_view name);
/// Spec preset from a profile: its rate and the mean latency implied by its overhead.
SynthSpec profile_spec(const WorkloadProfile& p);

FaultTrace synthesize(const SynthSpec& spec);

/// Share of the bracketed runtime spent handling faults, per active core.
double overhead_fraction(const FaultTrace& trace);

// Sensitivity sweep ----------------------------------------------------------

struct SweepCell {
  std::uint32_t width = 0;
  double interval_ms = 0;
  ModelReport report;
};

std::vector<SweepCell> sweep(const FaultTrace& trace, const std::vector<std::uint32_t>& widths,
                             const std::vector<double>& intervals_ms, const ModelParameters& params,
                             std::uint32_t cores = 0, unsigned workers = 1);

inline const std::vector<std::uint32_t> kDefaultWidths = {128, 256, 512, 1024};
inline const std::vector<double> kDefaultIntervalsMs = {2, 4, 8, 16, 32};

}  // namespace mfoesim
