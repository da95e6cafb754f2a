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

#include <doctest.h>

#include "mfoesim/kernel_model.hpp"
#include "support/race_harness.hpp"

using namespace mfoesim;
using mfoesim::testing::RaceSetup;

namespace {

struct World {
  explicit World(std::uint32_t cores = 2, std::uint32_t table_entries = 8, bool stocked = true) {
    KernelConfig kc;
    kc.cores = cores;
    kc.total_frames = 1024;
    kc.tlb_entries = 4;
    kernel = std::make_unique<KernelModel>(ModelParameters{}, kc, 3);
    tgid = kernel->create_process();
    kernel->mfoe_enable(tgid, table_entries, 0);
    if (stocked) kernel->catch_up(kernel->fill_done_time());
    vma = kernel->region_create(tgid, 16, true, 0);
    kernel->prefault_construct(tgid, vma);
  }
  AddressSpace& space() { return kernel->process(tgid).space; }
  VirtualAddress page(std::uint64_t i) const { return VirtualAddress{vma.start.value() + i * kPageSize}; }

  std::unique_ptr<KernelModel> kernel;
  Tgid tgid = 0;
  Vma vma;
};

}  // namespace

TEST_CASE("fault kind names round-trip") {
  for (std::size_t i = 0; i < kFaultKindCount; ++i) {
    const auto k = static_cast<FaultKind>(i);
    CHECK(fault_kind_from_string(to_string(k)) == k);
  }
  CHECK(to_string(FaultKind::MfoeHit) == "mfoe_hit");
  CHECK_FALSE(fault_kind_from_string("bogus").has_value());
}

TEST_CASE("TLB evicts the least recently used translation") {
  Tlb tlb(2);
  tlb.insert(1, 10, {Pfn{100}, true});
  tlb.insert(1, 11, {Pfn{101}, true});
  CHECK(tlb.lookup(1, 10).has_value());  // 11 is now the LRU entry
  tlb.insert(2, 10, {Pfn{200}, false});
  CHECK_FALSE(tlb.lookup(1, 11).has_value());
  CHECK(tlb.lookup(1, 10)->pfn == Pfn{100});
  CHECK(tlb.lookup(2, 10)->pfn == Pfn{200});
  tlb.invalidate(1, 10);
  CHECK(tlb.size() == 1);
  tlb.flush();
  CHECK(tlb.size() == 0);
  CHECK_THROWS_AS(Tlb(0), std::invalid_argument);
}

TEST_CASE("MFOE hit takes the tail frame and stamps the table entry") {
  World w;
  PreallocTable& t = w.kernel->table(0);
  const Pfn expected = entry_word::pfn(t.word1_at(t.tail_index()));
  const auto out = w.kernel->mmu().mfoe_handle(0, w.space(), w.page(3), true);
  CHECK(out.kind == FaultKind::MfoeHit);
  CHECK(out.cycles == 78);
  CHECK(out.pfn == expected);

  const PageTableEntry& leaf = w.space().page_table.leaf(w.page(3));
  CHECK(leaf.present());
  CHECK(leaf.mfoeable());
  CHECK_FALSE(leaf.locked());
  CHECK(leaf.pfn() == expected);
  CHECK(t.state_at(1) == EntryState::Used);
  CHECK(t.word0_at(1) == w.page(3).value());
  CHECK(entry_word::tgid(t.word1_at(1)) == w.tgid);
  CHECK(w.kernel->mmu().tlb(0).lookup(w.tgid, w.page(3).page_number())->pfn == expected);
  // Deferred: nothing accounted until the refresh tick.
  CHECK(w.kernel->ledger().records() == 0);
}

TEST_CASE("MFOE miss releases the lock and leaves the kernel to map the page") {
  World w(1, 8, false);
  const auto out = w.kernel->mmu().mfoe_handle(0, w.space(), w.page(0), false);
  CHECK(out.kind == FaultKind::MfoeMiss);
  CHECK(out.cycles == 14);
  const PageTableEntry& leaf = w.space().page_table.leaf(w.page(0));
  CHECK_FALSE(leaf.present());
  CHECK_FALSE(leaf.locked());

  const auto k = w.kernel->mmu().kernel_fault(0, w.space(), w.page(0), false);
  CHECK(k.kind == FaultKind::KernelFault);
  CHECK(k.kernel_cycles >= 1);
  CHECK(leaf.present());
  CHECK(leaf.mfoeable());
  CHECK(w.kernel->ledger().records() == 1);
  CHECK(w.kernel->ledger().rmap(leaf.pfn())->va == w.page(0));
}

TEST_CASE("walk outcomes that never engage the MFOE") {
  World w;
  Mmu& mmu = w.kernel->mmu();

  SUBCASE("disabled in CR9") {
    mmu.cr9(0).set_enabled(false);
    CHECK(mmu.mfoe_handle(0, w.space(), w.page(1), true).kind == FaultKind::KernelFault);
  }
  SUBCASE("leaf not MFOEable") {
    w.space().page_table.leaf(w.page(1)).set_mfoeable(false);
    CHECK(mmu.mfoe_handle(0, w.space(), w.page(1), true).kind == FaultKind::NonMfoeable);
  }
  SUBCASE("write to a read-only region") {
    const Vma ro = w.kernel->region_create(w.tgid, 1, false, 0);
    w.kernel->prefault_construct(w.tgid, ro);
    CHECK(mmu.mfoe_handle(0, w.space(), ro.start, true).kind == FaultKind::ProtectionFault);
    CHECK(mmu.mfoe_handle(0, w.space(), ro.start, false).kind == FaultKind::MfoeHit);
  }
  SUBCASE("address outside every region") {
    const auto out = mmu.kernel_fault(0, w.space(), VirtualAddress{0x1000}, false);
    CHECK(out.kind == FaultKind::Segv);
  }
  SUBCASE("already mapped page is a plain walk hit") {
    mmu.mfoe_handle(0, w.space(), w.page(2), true);
    CHECK(mmu.mfoe_handle(1, w.space(), w.page(2), true).kind == FaultKind::WalkHit);
  }
}

TEST_CASE("timeline access parks the owner and stalls a second core on the same page") {
  World w;
  Mmu& mmu = w.kernel->mmu();
  const auto a = mmu.access(0, w.space(), w.page(5), true, 1000);
  CHECK(a.kind == FaultKind::MfoeHit);
  CHECK(mmu.in_flight(0));
  CHECK(w.space().page_table.leaf(w.page(5)).locked());

  const auto b = mmu.access(1, w.space(), w.page(5), true, 1030);
  CHECK(b.kind == FaultKind::LockWait);
  CHECK(b.stall_cycles == 1000 + 78 - 1030);
  CHECK_THROWS_AS(mmu.access(0, w.space(), w.page(6), true, 1040), std::logic_error);

  mmu.retire(0);
  CHECK_FALSE(mmu.in_flight(0));
  CHECK(mmu.access(1, w.space(), w.page(5), true, 1078).kind == FaultKind::WalkHit);
  CHECK(mmu.access(0, w.space(), w.page(5), true, 1100).kind == FaultKind::TlbHit);
}

TEST_CASE("kernel latency samples are positive and follow the baseline mean") {
  World w;
  double sum = 0;
  constexpr int n = 200000;
  for (int i = 0; i < n; ++i) {
    const Cycles c = w.kernel->mmu().sample_kernel_latency();
    REQUIRE(c >= 1);
    sum += static_cast<double>(c);
  }
  CHECK(sum / n == doctest::Approx(2552).epsilon(0.02));
}

TEST_CASE("every interleaving of two cores on one page maps it exactly once") {
  for (RaceSetup s : {RaceSetup::Stocked, RaceSetup::EmptyTable, RaceSetup::Disabled, RaceSetup::NotMfoeable,
                      RaceSetup::PrefaultRacing}) {
    CAPTURE(mfoesim::testing::name(s));
    const auto stats = mfoesim::testing::enumerate_all(s, 2);
    CHECK(stats.schedules > 1);
    CHECK_MESSAGE(stats.failures == 0, stats.first_failure);
  }
}

TEST_CASE("every interleaving of three cores with a racing pre-fault thread") {
  for (RaceSetup s : {RaceSetup::Stocked, RaceSetup::PrefaultRacing}) {
    CAPTURE(mfoesim::testing::name(s));
    const auto stats = mfoesim::testing::enumerate_all(s, 3);
    CHECK_MESSAGE(stats.failures == 0, stats.first_failure);
  }
}

TEST_CASE("random schedules with four cores") {
  for (RaceSetup s : {RaceSetup::Stocked, RaceSetup::EmptyTable, RaceSetup::Disabled, RaceSetup::NotMfoeable,
                      RaceSetup::PrefaultRacing}) {
    CAPTURE(mfoesim::testing::name(s));
    const auto stats = mfoesim::testing::random_schedules(s, 4, 2000, 17);
    CHECK(stats.schedules == 2000);
    CHECK_MESSAGE(stats.failures == 0, stats.first_failure);
  }
}
