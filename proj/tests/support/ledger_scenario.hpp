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

// Randomized multi-process fault workload run twice: once through the MFOE
// with deferred bookkeeping, once entirely through the kernel path with
// inline bookkeeping. Processes exit at random points along the way.

#pragma once

#include <cstdint>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "mfoesim/kernel_model.hpp"

namespace mfoesim::testing {

struct LedgerRun {
  BookkeepingLedger::Canonical ledger;
  std::uint64_t mfoe_hits = 0;
  std::uint64_t dead_entries_left = 0;  // used entries still stamped with an exited TGID
};

inline LedgerRun ledger_run(bool mfoe, std::uint64_t seed) {
  std::mt19937_64 shape(seed);
  const std::uint32_t cores = 1 + static_cast<std::uint32_t>(shape() % 4);
  const std::uint32_t procs = 2 + static_cast<std::uint32_t>(shape() % 3);
  const std::uint32_t width = 4 + static_cast<std::uint32_t>(shape() % 60);
  const int steps = 200 + static_cast<int>(shape() % 300);

  KernelConfig kc;
  kc.cores = cores;
  kc.total_frames = 1 << 16;
  kc.tlb_entries = 8;
  KernelModel k(ModelParameters{}, kc, seed);
  std::vector<Tgid> tgids;
  std::vector<Vma> vmas;
  std::vector<int> exit_at;
  for (std::uint32_t p = 0; p < procs; ++p) {
    tgids.push_back(k.create_process());
    if (mfoe) k.mfoe_enable(tgids.back(), width, 0);
    exit_at.push_back(static_cast<int>(shape() % static_cast<std::uint64_t>(steps + 50)));
  }
  for (std::uint32_t p = 0; p < procs; ++p) {
    vmas.push_back(k.region_create(tgids[p], 256, true, 0));
    if (mfoe) k.prefault_construct(tgids[p], vmas[p]);
  }

  LedgerRun out;
  std::set<std::pair<Tgid, std::uint64_t>> touched;
  Cycles now = 0;
  for (int i = 0; i < steps; ++i) {
    for (std::uint32_t p = 0; p < procs; ++p) {
      if (exit_at[p] == i) k.terminate(tgids[p]);
    }
    const auto p = static_cast<std::uint32_t>(shape() % procs);
    const std::uint64_t page = shape() % 256;
    const auto core = static_cast<CoreId>(shape() % cores);
    now += static_cast<Cycles>(shape() % 400000);
    k.catch_up(now);
    if (!k.process(tgids[p]).alive || !touched.insert({tgids[p], page}).second) continue;
    AddressSpace& s = k.process(tgids[p]).space;
    const VirtualAddress va{vmas[p].start.value() + page * kPageSize};
    if (mfoe) {
      const FaultOutcome o = k.mmu().mfoe_handle(core, s, va, true);
      if (o.kind == FaultKind::MfoeHit) {
        ++out.mfoe_hits;
        continue;
      }
    }
    k.mmu().kernel_fault(core, s, va, true);
  }
  for (Tgid t : tgids) k.terminate(t);

  if (k.tables_constructed()) {
    for (CoreId c = 0; c < cores; ++c) {
      const PreallocTable& t = k.table(c);
      for (std::uint32_t i = 1; i < t.num_entries(); ++i) {
        if (t.state_at(i) == EntryState::Used) ++out.dead_entries_left;
      }
    }
  }
  out.ledger = k.ledger().canonical();
  return out;
}

}  // namespace mfoesim::testing
