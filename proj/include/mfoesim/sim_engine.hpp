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

// Deterministic discrete-event simulation of the strided-touch
// microbenchmark: each thread runs on its own core, computes for a fixed
// gap, touches the next page of its region, and waits for the fault to be
// handled before computing again.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mfoesim/kernel_model.hpp"
#include "mfoesim/mfoe_engine.hpp"
#include "mfoesim/params.hpp"

namespace mfoesim {

enum class SimMode { Hardware, Software, Baseline };

std::string_view to_string(SimMode m);
SimMode sim_mode_from_string(std::string_view s);

struct WorkloadSpec {
  std::uint32_t threads = 1;
  std::uint64_t region_pages = 0;  // 0: just large enough for the strided walk
  std::uint64_t stride = 1;        // pages between consecutive faults
  std::uint64_t redundant_accesses = 0;  // non-faulting touches after each fault
  std::uint64_t faults_per_thread = 32768;
  Cycles interarrival_cycles = 21000;  // compute between a fault's completion and the next touch

  std::uint64_t pages_needed() const noexcept { return (faults_per_thread - 1) * stride + 1; }
};

struct SimConfig {
  ModelParameters params;
  WorkloadSpec workload;
  SimMode mode = SimMode::Hardware;
  std::uint32_t cores = 0;  // 0: one per thread
  std::size_t tlb_entries = 64;
  std::uint32_t table_entries = 256;
  double refresh_interval_ms = 2.0;
  std::uint32_t numa_nodes = 1;
  std::uint64_t total_frames = 0;  // 0: sized from the workload
  double quota_threshold = 0.8;
  double prefault_throughput_pages_per_s = 20e6;
  std::uint64_t seed = 1;

  std::uint32_t effective_cores() const noexcept { return cores == 0 ? workload.threads : cores; }
  std::uint64_t effective_total_frames() const noexcept;
  std::vector<std::string> violations() const;
  void validate() const;
};

struct FaultRecord {
  Cycles timestamp = 0;
  CoreId core = 0;
  FaultKind kind = FaultKind::TlbHit;
  Cycles latency = 0;
};

/// Per-core time split. end_time == compute + fault_overhead + stall.
struct CoreAccount {
  Cycles end_time = 0;
  Cycles compute = 0;
  Cycles fault_overhead = 0;
  Cycles stall = 0;
  std::uint64_t faults = 0;
};

struct LatencySummary {
  std::uint64_t count = 0;
  double mean = 0;
  Cycles p95 = 0;
  Cycles max = 0;
};

struct SimReport {
  SimConfig config;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  double hit_rate = 0;
  std::array<std::uint64_t, kFaultKindCount> outcomes{};
  LatencySummary fault_latency;  // every resolved fault
  LatencySummary hit_latency;    // MFOE-handled faults only
  /// Configured baseline mean over the mean critical-path latency of hits.
  double critical_path_speedup = 0;
  Cycles total_fault_overhead = 0;
  Cycles total_stall = 0;
  Cycles makespan = 0;
  std::uint64_t redundant_accesses = 0;
  std::vector<CoreAccount> cores;
  std::vector<FaultRecord> faults;
  KernelStats kernel;
  FrameCensus census;
};

SimReport run(const SimConfig& config);
SimReport replay_seeded(SimConfig config, std::uint64_t seed);

LatencySummary summarize(std::vector<Cycles> latencies);

}  // namespace mfoesim
