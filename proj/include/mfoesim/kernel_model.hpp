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

// Operating-system side of the model: processes and their regions, the
// enable/disable calls, the pre-fault thread that stamps leaf entries, the
// periodic refresh that harvests used table entries and refills them, the
// termination cleanup, the memory-pressure policy and the software-emulated
// fault path.
//
// Background work is lazy: catch_up(now) replays everything the fill,
// pre-fault and refresh tasks would have done up to `now`, in time order.

#pragma once

#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mfoesim/mfoe_engine.hpp"
#include "mfoesim/params.hpp"
#include "mfoesim/prealloc_table.hpp"
#include "mfoesim/vm_core.hpp"

namespace mfoesim {

/// Deferred (or inline) accounting for a newly mapped anonymous page.
class BookkeepingLedger {
 public:
  struct Mapping {
    Tgid tgid = 0;
    VirtualAddress va;
    friend auto operator<=>(const Mapping&, const Mapping&) = default;
  };

  /// Frame-independent view used to compare two runs of the same faults.
  struct Canonical {
    std::vector<Mapping> mappings;  // sorted
    std::map<Tgid, std::uint64_t> mm_counters;
    std::uint64_t cgroup_charge = 0;
    std::size_t lru_size = 0;
    friend bool operator==(const Canonical&, const Canonical&) = default;
  };

  /// anon_vma_prepare, mm counter, reverse map, LRU insertion, in that order.
  /// A frame already in the reverse map is a double-processing bug.
  void record(Tgid tgid, VirtualAddress va, Pfn pfn);

  std::uint64_t mm_counter(Tgid tgid) const;
  std::uint64_t cgroup_charge() const noexcept { return cgroup_charge_; }
  bool has_anon_vma(Tgid tgid) const { return anon_vma_.count(tgid) != 0; }
  std::optional<Mapping> rmap(Pfn pfn) const;
  std::size_t rmap_size() const noexcept { return rmap_.size(); }
  std::size_t lru_size() const noexcept { return lru_.size(); }
  bool on_lru(Pfn pfn) const { return on_lru_.count(raw(pfn)) != 0; }
  std::uint64_t records() const noexcept { return records_; }

  Canonical canonical() const;

 private:
  std::set<Tgid> anon_vma_;
  std::map<Tgid, std::uint64_t> mm_;
  std::map<std::uint64_t, Mapping> rmap_;
  std::list<Pfn> lru_;
  std::unordered_set<std::uint64_t> on_lru_;
  std::uint64_t cgroup_charge_ = 0;
  std::uint64_t records_ = 0;
};

struct ProcessModel {
  explicit ProcessModel(Tgid tgid) : space(tgid) {}

  AddressSpace space;
  bool mfoe_enabled = false;
  bool alive = true;
  std::uint64_t quota = 0;  // frames
  bool clear_mfoeable_pending = false;
  std::uint64_t next_region = 0x10000000;

  Tgid tgid() const noexcept { return space.tgid; }
};

struct KernelConfig {
  std::uint32_t cores = 1;
  std::uint32_t numa_nodes = 1;
  std::uint64_t total_frames = std::uint64_t{1} << 20;
  std::size_t tlb_entries = 64;
  double refresh_interval_ms = 2.0;
  double quota_threshold = 0.8;
  std::uint64_t quota_frames = 0;  // 0: all of memory
  double prefault_throughput_pages_per_s = 20e6;
  /// Software-emulated mode keeps the tables stocked but never sets the
  /// CR9 enable bit, so the hardware path stays dormant.
  bool hardware_mfoe = true;
};

enum class SeError { NoVma, NotVmMfoe, NotMfoeable, TgidMismatch, AlreadyMapped, LeafBusy, TableEmpty };

std::string_view to_string(SeError e);

struct SeOutcome {
  std::optional<SeError> error;
  Cycles cycles = 0;
  std::optional<Pfn> pfn;

  bool resolved() const noexcept { return !error.has_value(); }
};

/// Where every frame is at a quiescent point.
struct FrameCensus {
  std::uint64_t total = 0;
  std::uint64_t free = 0;
  std::uint64_t valid_in_tables = 0;
  std::uint64_t mapped = 0;

  bool balanced() const noexcept { return free + valid_in_tables + mapped == total; }
};

struct KernelStats {
  std::uint64_t ticks = 0;
  std::uint64_t harvested = 0;
  std::uint64_t refilled = 0;
  std::uint64_t fill_pages = 0;
  std::uint64_t prefault_pages = 0;
  std::uint64_t cleanup_records = 0;
  std::uint64_t frames_released = 0;
  std::uint64_t pressure_disables = 0;
  std::vector<std::uint64_t> first_visits;  // per core
};

class KernelModel final : public KernelServices {
 public:
  KernelModel(const ModelParameters& params, KernelConfig config, std::uint64_t seed);

  KernelModel(const KernelModel&) = delete;
  KernelModel& operator=(const KernelModel&) = delete;

  const KernelConfig& config() const noexcept { return config_; }
  const ModelParameters& params() const noexcept { return params_; }
  Mmu& mmu() noexcept { return mmu_; }
  FrameAllocator& frames() noexcept { return frames_; }
  const FrameAllocator& frames() const noexcept { return frames_; }
  BookkeepingLedger& ledger() noexcept { return ledger_; }
  const BookkeepingLedger& ledger() const noexcept { return ledger_; }
  const KernelStats& stats() const noexcept { return stats_; }

  Tgid create_process();
  ProcessModel& process(Tgid tgid);
  const ProcessModel& process(Tgid tgid) const;

  bool tables_constructed() const noexcept { return !tables_.empty(); }
  PreallocTable& table(CoreId core) { return *tables_.at(core); }
  Pfn table_pfn(CoreId core) const;
  Cycles refresh_interval_cycles() const noexcept { return refresh_cycles_; }
  /// Time at which the initial fill started by the latest enable finishes.
  Cycles fill_done_time() const noexcept { return fill_done_; }

  void mfoe_enable(Tgid tgid, std::uint32_t preallocation_size, Cycles now);
  void mfoe_disable(Tgid tgid);

  /// Anonymous private mapping of `pages` pages. Regions of an enabled
  /// process carry VM_MFOE and get a pre-fault task starting at `now`.
  Vma region_create(Tgid tgid, std::uint64_t pages, bool writable, Cycles now);
  /// Stamps every leaf of `vma` at once (the task's work done synchronously).
  void prefault_construct(Tgid tgid, const Vma& vma);

  /// Runs fill, pre-fault and refresh work scheduled at or before `now`.
  void catch_up(Cycles now);
  /// Next scheduled refresh, if the tables exist.
  std::optional<Cycles> next_event_time() const;
  /// Runs the next refresh tick immediately with its normal budget.
  void postfault_tick(Cycles now);

  /// Processes the terminating process's used entries on every core.
  std::size_t error_cleanup(Tgid tgid);
  void resource_check(Tgid tgid);
  SeOutcome mfoe_se(Tgid tgid, CoreId core, VirtualAddress va, bool is_write);
  /// Process exit: cleanup, disable, mark dead. Its mappings stay in place.
  void terminate(Tgid tgid);

  FrameCensus frame_census() const;
  std::size_t active_mfoe_processes() const noexcept { return active_; }

  // KernelServices
  PreallocTable* table_at(Pfn table_pfn) override;
  Pfn allocate_inline(CoreId core) override;
  void account_inline(Tgid tgid, VirtualAddress va, Pfn pfn) override;

 private:
  struct PrefaultTask {
    Tgid tgid;
    Vma vma;
    Cycles start;
    std::uint64_t done = 0;
  };

  NodeId node_of_core(CoreId core) const noexcept;
  void construct_tables(std::uint32_t num_entries);
  void start_fill(Cycles now);
  void advance_fill(Cycles now);
  void advance_prefault(Cycles now);
  void stamp(const PrefaultTask& task, std::uint64_t page);
  void run_tick();
  void clear_pending_mfoeable();
  void record(const PreallocRecord& r) { ledger_.record(r.tgid, r.va, r.pfn); }

  ModelParameters params_;
  KernelConfig config_;
  FrameAllocator frames_;
  Mmu mmu_;
  BookkeepingLedger ledger_;
  std::vector<std::unique_ptr<PreallocTable>> tables_;
  std::map<Tgid, std::unique_ptr<ProcessModel>> procs_;
  std::vector<PrefaultTask> prefault_;
  Tgid next_tgid_ = 1;
  std::size_t active_ = 0;
  bool refill_ = false;

  Cycles refresh_cycles_;
  Cycles tick_epoch_ = 0;  // refresh ticks fire at epoch + j * interval
  Cycles fill_origin_ = 0;
  Cycles fill_done_ = 0;
  bool filling_ = false;
  std::int64_t fill_pages_done_ = 0;
  CoreId fill_core_ = 0;

  LatencyDistribution se_latency_;
  std::mt19937_64 se_rng_;
  KernelStats stats_;
};

}  // namespace mfoesim
