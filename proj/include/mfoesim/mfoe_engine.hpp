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

// TLB, hardware page walker and the MFOE extension.
//
// Fault handling is written as a resumable state machine (FaultHandler) so
// the same code drives three callers: the synchronous helpers, the timeline
// simulator (which pauses a handler at its commit point until its latency
// has elapsed) and the interleaving enumerator in the tests, which steps
// several cores' handlers one atomic action at a time.

#pragma once

#include <cstddef>
#include <cstdint>
#include <list>
#include <map>
#include <optional>
#include <random>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mfoesim/params.hpp"
#include "mfoesim/prealloc_table.hpp"
#include "mfoesim/vm_core.hpp"

namespace mfoesim {

enum class FaultKind {
  TlbHit,
  WalkHit,
  MfoeHit,
  MfoeMiss,     // table empty, fell back to the kernel
  NonMfoeable,  // MFOEable bit clear (or path not built), kernel handles it
  KernelFault,  // MFOE disabled in CR9, kernel handles it
  LockWait,     // another handler owned the page; retried after it finished
  ProtectionFault,
  Segv,
  SoftwareHit,   // software-emulated path resolved the fault
  SoftwareMiss,  // software-emulated path returned an error, kernel handled it
};

inline constexpr std::size_t kFaultKindCount = 11;

std::string_view to_string(FaultKind k);
std::optional<FaultKind> fault_kind_from_string(std::string_view s);

struct FaultOutcome {
  FaultKind kind = FaultKind::TlbHit;
  Cycles cycles = 0;         // everything charged to the faulting core
  Cycles mfoe_cycles = 0;    // hit latency or miss penalty
  Cycles kernel_cycles = 0;  // software handler time
  Cycles stall_cycles = 0;   // lock wait
  std::optional<Pfn> pfn;
};

/// Fully associative LRU TLB keyed by (address space, virtual page).
class Tlb {
 public:
  struct Translation {
    Pfn pfn{};
    bool rw = false;
  };

  explicit Tlb(std::size_t capacity);

  std::optional<Translation> lookup(Tgid asid, std::uint64_t vpn);
  void insert(Tgid asid, std::uint64_t vpn, Translation t);
  void invalidate(Tgid asid, std::uint64_t vpn);
  void flush() noexcept;

  std::size_t size() const noexcept { return index_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& e : lru_) fn(e.asid, e.vpn, e.t);
  }

 private:
  struct Entry {
    Tgid asid;
    std::uint64_t vpn;
    Translation t;
  };
  using Key = std::pair<Tgid, std::uint64_t>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept { return std::hash<std::uint64_t>{}(k.second * 65599u + k.first); }
  };

  std::size_t capacity_;
  std::list<Entry> lru_;  // front = most recent
  std::unordered_map<Key, std::list<Entry>::iterator, KeyHash> index_;
};

/// What the hardware needs from the operating system side: resolving the
/// table PFN published in CR9, and the inline (software) allocation path.
class KernelServices {
 public:
  virtual ~KernelServices() = default;
  virtual PreallocTable* table_at(Pfn table_pfn) = 0;
  virtual Pfn allocate_inline(CoreId core) = 0;
  virtual void account_inline(Tgid tgid, VirtualAddress va, Pfn pfn) = 0;
};

enum class HandlerPhase {
  Walk,
  Lock,
  Consume,
  Install,
  Unlock,
  FillTlb,
  Wait,
  KernelLock,
  KernelCheck,
  KernelInstall,
  KernelUnlock,
  Done,
};

enum class StepStatus { Progressed, Blocked, Done };

/// In-flight fault on one core. Plain data; the Mmu advances it.
struct FaultHandler {
  CoreId core = 0;
  AddressSpace* space = nullptr;
  VirtualAddress va;  // page base
  bool is_write = false;
  HandlerPhase phase = HandlerPhase::Walk;
  FaultKind kind = FaultKind::WalkHit;
  std::optional<Pfn> frame;
  bool frame_from_table = false;
  bool frame_from_allocator = false;

  bool done() const noexcept { return phase == HandlerPhase::Done; }
  /// Phases at which the timeline simulator parks a handler until its
  /// latency has elapsed: the PTE update is what becomes visible to others.
  bool at_commit_point() const noexcept {
    return phase == HandlerPhase::Install || phase == HandlerPhase::KernelInstall ||
           phase == HandlerPhase::KernelUnlock;
  }
};

struct MmuConfig {
  std::uint32_t cores = 1;
  std::size_t tlb_entries = 64;
};

class Mmu {
 public:
  Mmu(const ModelParameters& params, MmuConfig config, KernelServices& kernel, std::uint64_t seed);

  std::uint32_t cores() const noexcept { return static_cast<std::uint32_t>(tlbs_.size()); }
  Cr9Register& cr9(CoreId core) { return cr9_.at(core); }
  const Cr9Register& cr9(CoreId core) const { return cr9_.at(core); }
  Tlb& tlb(CoreId core) { return tlbs_.at(core); }
  const ModelParameters& params() const noexcept { return params_; }

  // Step-level interface --------------------------------------------------

  /// Handler for a fault that already missed the TLB.
  FaultHandler begin(CoreId core, AddressSpace& space, VirtualAddress va, bool is_write) const;
  /// Performs one atomic action. Blocked leaves all state untouched.
  StepStatus step(FaultHandler& h);
  bool runnable(const FaultHandler& h) const;

  // Timeline interface ----------------------------------------------------

  /// One memory access at cycle `now`. Faults that need handling run up to
  /// their commit point, hold the PTE lock and stay in flight on the core
  /// until retire(core) is called at now + outcome.cycles.
  FaultOutcome access(CoreId core, AddressSpace& space, VirtualAddress va, bool is_write, Cycles now);
  void retire(CoreId core);
  bool in_flight(CoreId core) const { return inflight_.at(core).has_value(); }

  // Synchronous helpers (no other handler in flight) -----------------------

  /// MFOE handling of a non-present leaf: MfoeHit, MfoeMiss (lock released,
  /// nothing consumed), NonMfoeable/KernelFault when MFOE does not engage,
  /// or LockWait when another handler owns the PTE.
  FaultOutcome mfoe_handle(CoreId core, AddressSpace& space, VirtualAddress va, bool is_write);
  /// Kernel page-fault handler with inline allocation and bookkeeping.
  FaultOutcome kernel_fault(CoreId core, AddressSpace& space, VirtualAddress va, bool is_write);

  /// Draws a kernel fault latency from the baseline distribution.
  Cycles sample_kernel_latency();
  const LatencyDistribution& baseline_latency() const noexcept { return baseline_; }

 private:
  PageTableEntry* leaf_of(const FaultHandler& h) const;
  void to_kernel(FaultHandler& h, FaultKind kind) const;
  void fill_tlb(const FaultHandler& h, const PageTableEntry& e);
  FaultOutcome finish_sync(FaultHandler& h, bool stop_after_mfoe);

  ModelParameters params_;
  KernelServices& kernel_;
  std::vector<Cr9Register> cr9_;
  std::vector<Tlb> tlbs_;
  std::vector<std::optional<FaultHandler>> inflight_;
  std::vector<Cycles> inflight_end_;
  std::map<std::pair<Tgid, std::uint64_t>, CoreId> page_owner_;
  LatencyDistribution baseline_;
  std::mt19937_64 rng_;
};

}  // namespace mfoesim
