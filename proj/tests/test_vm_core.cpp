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

#include <random>
#include <set>

#include "mfoesim/vm_core.hpp"

using namespace mfoesim;

TEST_CASE("decompose splits an address into four 9-bit indices and an offset") {
  CHECK(decompose(0x201000) == AddressParts{0, 0, 1, 1, 0});
  CHECK(decompose(0x7FFFFFFFF000) == AddressParts{255, 511, 511, 511, 0});
  CHECK(decompose(0x123) == AddressParts{0, 0, 0, 0, 0x123});
}

TEST_CASE("decompose and recompose agree with plain division on random addresses") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::uint64_t> any(0, (std::uint64_t{1} << 48) - 1);
  for (int i = 0; i < 20000; ++i) {
    const std::uint64_t va = any(rng);
    const AddressParts p = decompose(va);
    CHECK(p.offset == va % 4096);
    CHECK(p.pt == (va / 4096) % 512);
    CHECK(p.pd == (va / 4096 / 512) % 512);
    CHECK(p.pdpt == (va / 4096 / 512 / 512) % 512);
    CHECK(p.pml4 == (va / 4096 / 512 / 512 / 512) % 512);
    CHECK(recompose(p) == va);
  }
}

TEST_CASE("virtual addresses must be canonical user addresses") {
  CHECK_NOTHROW(VirtualAddress{0x7FFFFFFFFFFF});
  CHECK_THROWS_AS(VirtualAddress{std::uint64_t{1} << 48}, CanonicalityError);
  CHECK_THROWS_AS(VirtualAddress{0xFFFF800000000000}, CanonicalityError);
  const VirtualAddress va{0x12345678};
  CHECK(va.page_number() == 0x12345);
  CHECK(va.page_base().value() == 0x12345000);
  CHECK(VirtualAddress::from_page(7).value() == 7 * 4096);
}

TEST_CASE("leaf entry bit layout") {
  SUBCASE("pre-fault form carries the TGID in the frame field") {
    const auto e = PageTableEntry::mfoeable_for(0x1234, true);
    CHECK(e.raw() == ((std::uint64_t{0x1234} << 12) | (1u << 2) | (1u << 1)));
    CHECK_FALSE(e.present());
    CHECK(e.mfoeable());
    CHECK(e.tgid() == 0x1234);
    CHECK_THROWS_AS((void)e.pfn(), std::logic_error);
  }
  SUBCASE("mapped form carries the PFN") {
    const auto e = PageTableEntry::mapped(Pfn{0xABCDE}, false);
    CHECK(e.raw() == ((std::uint64_t{0xABCDE} << 12) | 1u));
    CHECK(e.pfn() == Pfn{0xABCDE});
    CHECK_FALSE(e.rw());
    CHECK_THROWS_AS((void)e.tgid(), std::logic_error);
  }
  SUBCASE("lock is bit 9 and test-and-set reports the previous value") {
    auto e = PageTableEntry::mfoeable_for(5, true);
    const auto before = e.test_and_set_lock();
    CHECK_FALSE(before.locked());
    CHECK(e.locked());
    CHECK((e.raw() >> 9 & 1) == 1);
    CHECK(e.test_and_set_lock().locked());
    e.set_locked(false);
    CHECK(e == PageTableEntry::mfoeable_for(5, true));
  }
  SUBCASE("frame field holds 36 bits") {
    PageTableEntry e;
    CHECK_NOTHROW(e.set_frame_field((std::uint64_t{1} << 36) - 1));
    CHECK_THROWS_AS(e.set_frame_field(std::uint64_t{1} << 36), std::out_of_range);
  }
}

TEST_CASE("page table builds paths on demand") {
  PageTable pt;
  const VirtualAddress a{0x201000};
  CHECK(pt.find_leaf(a) == nullptr);
  CHECK_THROWS_AS(pt.leaf(a), std::logic_error);

  PageTableEntry& leaf = pt.construct_path(a);
  CHECK(pt.intermediate_nodes() == 3);
  CHECK(pt.find_leaf(a) == &leaf);
  CHECK(&pt.leaf(a) == &leaf);

  // Same leaf table: nothing new.
  pt.construct_path(VirtualAddress{0x202000});
  CHECK(pt.intermediate_nodes() == 3);
  // New PD entry only.
  pt.construct_path(VirtualAddress{0x400000});
  CHECK(pt.intermediate_nodes() == 4);
  // Different PML4 slot: three new levels.
  pt.construct_path(VirtualAddress{0x7FFFFFFFF000});
  CHECK(pt.intermediate_nodes() == 7);

  leaf = PageTableEntry::mapped(Pfn{3}, true);
  CHECK(pt.count_present() == 1);
}

TEST_CASE("for_each_leaf visits every slot of every leaf table with its address") {
  PageTable pt;
  pt.construct_path(VirtualAddress{0x201000}) = PageTableEntry::mapped(Pfn{9}, true);
  pt.construct_path(VirtualAddress{0x7FFFFFFFF000});
  std::set<std::uint64_t> seen;
  std::uint64_t present_at = 0;
  pt.for_each_leaf([&](VirtualAddress va, const PageTableEntry& e) {
    seen.insert(va.value());
    if (e.present()) present_at = va.value();
  });
  CHECK(seen.size() == 2 * 512);
  CHECK(seen.count(0x200000) == 1);
  CHECK(seen.count(0x7FFFFFFFF000) == 1);
  CHECK(present_at == 0x201000);
}

TEST_CASE("address space finds the VMA containing an address") {
  AddressSpace as(3);
  as.vmas.push_back({VirtualAddress{0x10000}, VirtualAddress{0x12000}, true, false});
  as.vmas.push_back({VirtualAddress{0x20000}, VirtualAddress{0x20000}, true, false});
  CHECK(as.find_vma(VirtualAddress{0x11FFF}) == &as.vmas[0]);
  CHECK(as.find_vma(VirtualAddress{0x12000}) == nullptr);
  CHECK(as.find_vma(VirtualAddress{0x20000}) == nullptr);
  CHECK(as.vmas[0].pages() == 2);
  CHECK(as.vmas[1].pages() == 0);
}

TEST_CASE("frame allocator keeps per-node free lists") {
  FrameAllocator fa(10, 2);
  CHECK(fa.free_frames() == 10);
  CHECK(fa.free_frames(0) == 5);
  CHECK(fa.node_of(Pfn{4}) == 0);
  CHECK(fa.node_of(Pfn{5}) == 1);

  CHECK(fa.allocate(1) == Pfn{5});
  CHECK(fa.allocate(0, ZeroingCharge::FaultingCore) == Pfn{0});
  CHECK(fa.zeroed_in_background() == 1);
  CHECK(fa.zeroed_on_fault_path() == 1);

  // Node 1 drains, then falls back to node 0.
  for (int i = 0; i < 4; ++i) fa.allocate(1);
  CHECK(fa.free_frames(1) == 0);
  CHECK(fa.node_of(fa.allocate(1)) == 0);
  CHECK(fa.allocated_frames() == 7);

  fa.release(Pfn{5});
  CHECK(fa.free_frames(1) == 1);
  CHECK_FALSE(fa.is_allocated(Pfn{5}));
  CHECK_THROWS_AS(fa.release(Pfn{5}), std::logic_error);
  CHECK_THROWS_AS(fa.release(Pfn{99}), std::logic_error);

  while (fa.free_frames() > 0) fa.allocate(0);
  CHECK_THROWS_AS(fa.allocate(0), OutOfMemory);
}

TEST_CASE("frame allocator rejects impossible layouts") {
  CHECK_THROWS_AS(FrameAllocator(4, 0), std::invalid_argument);
  CHECK_THROWS_AS(FrameAllocator(2, 3), std::invalid_argument);
}
