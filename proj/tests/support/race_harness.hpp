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

// Interleaving harness for the PTE lock protocol: several cores fault on
// the same page and their handlers are stepped one atomic action at a time
// under an explicit schedule. Worlds are rebuilt from scratch and the
// schedule prefix replayed, so no model state ever needs copying.

#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mfoesim/kernel_model.hpp"

namespace mfoesim::testing {

enum class RaceSetup {
  Stocked,         // every table holds frames: MFOE path
  EmptyTable,      // tables empty: MFOE miss, kernel fallback
  Disabled,        // CR9 enable clear: straight to the kernel
  NotMfoeable,     // process never enabled: no path, kernel builds it
  PrefaultRacing,  // pre-fault thread stamps the leaf concurrently
};

inline const char* name(RaceSetup s) {
  switch (s) {
    case RaceSetup::Stocked: return "stocked";
    case RaceSetup::EmptyTable: return "empty-table";
    case RaceSetup::Disabled: return "disabled";
    case RaceSetup::NotMfoeable: return "not-mfoeable";
    case RaceSetup::PrefaultRacing: return "prefault-racing";
  }
  return "?";
}

struct RaceWorld {
  std::unique_ptr<KernelModel> kernel;
  Tgid tgid = 0;
  Vma vma;
  std::vector<FaultHandler> handlers;
  bool prefault_pending = false;
  std::uint64_t valid_before = 0;
  std::uint64_t allocated_before = 0;
  std::uint64_t ledger_before = 0;

  std::uint32_t actors() const { return static_cast<std::uint32_t>(handlers.size()) + (prefault_pending ? 1 : 0); }
};

inline std::uint64_t valid_frames(KernelModel& k) {
  std::uint64_t n = 0;
  for (CoreId c = 0; c < k.config().cores; ++c) n += k.table(c).count(EntryState::Valid);
  return n;
}

inline std::unique_ptr<RaceWorld> make_world(RaceSetup setup, std::uint32_t cores) {
  auto w = std::make_unique<RaceWorld>();
  KernelConfig kc;
  kc.cores = cores;
  kc.total_frames = 256;
  kc.tlb_entries = 8;
  w->kernel = std::make_unique<KernelModel>(ModelParameters{}, kc, 7);
  KernelModel& k = *w->kernel;
  w->tgid = k.create_process();

  Cycles now = 0;
  if (setup != RaceSetup::NotMfoeable) {
    k.mfoe_enable(w->tgid, 4, 0);
    if (setup != RaceSetup::EmptyTable) {
      now = k.fill_done_time();
      k.catch_up(now);
    }
  }
  w->vma = k.region_create(w->tgid, 1, true, now);
  if (setup != RaceSetup::NotMfoeable && setup != RaceSetup::PrefaultRacing) k.prefault_construct(w->tgid, w->vma);
  if (setup == RaceSetup::Disabled) {
    for (CoreId c = 0; c < cores; ++c) k.mmu().cr9(c).set_enabled(false);
  }
  w->prefault_pending = setup == RaceSetup::PrefaultRacing;

  AddressSpace& space = k.process(w->tgid).space;
  for (CoreId c = 0; c < cores; ++c) w->handlers.push_back(k.mmu().begin(c, space, w->vma.start, true));
  if (k.tables_constructed()) w->valid_before = valid_frames(k);
  w->allocated_before = k.frames().allocated_frames();
  w->ledger_before = k.ledger().records();
  return w;
}

/// Actor ids 0..cores-1 are fault handlers; `cores` is the pre-fault thread.
inline std::vector<std::uint32_t> runnable_actors(const RaceWorld& w) {
  std::vector<std::uint32_t> r;
  for (std::uint32_t i = 0; i < w.handlers.size(); ++i) {
    if (!w.handlers[i].done() && w.kernel->mmu().runnable(w.handlers[i])) r.push_back(i);
  }
  if (w.prefault_pending) r.push_back(static_cast<std::uint32_t>(w.handlers.size()));
  return r;
}

inline void step_actor(RaceWorld& w, std::uint32_t actor) {
  if (actor == w.handlers.size()) {
    w.kernel->prefault_construct(w.tgid, w.vma);
    w.prefault_pending = false;
    return;
  }
  if (w.kernel->mmu().step(w.handlers[actor]) == StepStatus::Blocked) throw std::logic_error("stepped a blocked handler");
}

struct RaceVerdict {
  bool ok = true;
  std::string why;
  std::uint64_t frames_taken = 0;
};

/// Final-state checks once no actor can move.
inline RaceVerdict check(RaceWorld& w) {
  RaceVerdict v;
  auto fail = [&v](std::string why) {
    if (v.ok) v.why = std::move(why);
    v.ok = false;
  };
  KernelModel& k = *w.kernel;
  for (const auto& h : w.handlers) {
    if (!h.done()) fail("deadlock: a handler cannot make progress");
  }
  const std::uint64_t valid_after = k.tables_constructed() ? valid_frames(k) : 0;
  const std::uint64_t from_tables = w.valid_before - valid_after;
  const std::uint64_t from_allocator = k.frames().allocated_frames() - w.allocated_before;
  v.frames_taken = from_tables + from_allocator;
  if (v.frames_taken != 1) fail("frames taken for one page: " + std::to_string(v.frames_taken));

  const PageTableEntry* leaf = k.process(w.tgid).space.page_table.find_leaf(w.vma.start);
  if (leaf == nullptr || !leaf->present()) {
    fail("page not mapped at the end");
    return v;
  }
  if (leaf->locked()) fail("PTE lock left held");
  for (const auto& h : w.handlers) {
    auto t = k.mmu().tlb(h.core).lookup(w.tgid, w.vma.start.page_number());
    if (t && t->pfn != leaf->pfn()) fail("stale TLB entry");
    if (h.frame && !h.frame_from_table && !h.frame_from_allocator) fail("frame from nowhere");
  }
  if (k.ledger().records() - w.ledger_before != from_allocator) fail("inline bookkeeping count differs from inline allocations");
  return v;
}

struct EnumerationStats {
  std::uint64_t schedules = 0;
  std::uint64_t failures = 0;
  std::string first_failure;
};

namespace detail {

inline void explore(RaceSetup setup, std::uint32_t cores, std::vector<std::uint32_t>& prefix, EnumerationStats& stats) {
  auto w = make_world(setup, cores);
  for (std::uint32_t a : prefix) step_actor(*w, a);
  const auto next = runnable_actors(*w);
  if (next.empty()) {
    ++stats.schedules;
    const RaceVerdict v = check(*w);
    if (!v.ok && stats.failures++ == 0) stats.first_failure = v.why;
    return;
  }
  for (std::uint32_t a : next) {
    prefix.push_back(a);
    explore(setup, cores, prefix, stats);
    prefix.pop_back();
  }
}

}  // namespace detail

/// Every interleaving of the actors' atomic steps.
inline EnumerationStats enumerate_all(RaceSetup setup, std::uint32_t cores) {
  EnumerationStats stats;
  std::vector<std::uint32_t> prefix;
  detail::explore(setup, cores, prefix, stats);
  return stats;
}

/// `count` schedules, each picking uniformly among the runnable actors.
inline EnumerationStats random_schedules(RaceSetup setup, std::uint32_t cores, std::uint64_t count, std::uint64_t seed) {
  EnumerationStats stats;
  std::mt19937_64 rng(seed);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto w = make_world(setup, cores);
    for (auto next = runnable_actors(*w); !next.empty(); next = runnable_actors(*w)) {
      std::uniform_int_distribution<std::size_t> pick(0, next.size() - 1);
      step_actor(*w, next[pick(rng)]);
    }
    ++stats.schedules;
    const RaceVerdict v = check(*w);
    if (!v.ok && stats.failures++ == 0) stats.first_failure = v.why;
  }
  return stats;
}

}  // namespace mfoesim::testing
