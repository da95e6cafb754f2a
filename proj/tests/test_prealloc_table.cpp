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

#include <atomic>
#include <cstdio>
#include <string>
#include <thread>
#include <vector>

#include "mfoesim/prealloc_table.hpp"

using namespace mfoesim;

namespace {

std::string to_hex(const std::vector<std::byte>& bytes) {
  std::string s;
  char buf[3];
  for (std::byte b : bytes) {
    std::snprintf(buf, sizeof buf, "%02x", std::to_integer<unsigned>(b));
    s += buf;
  }
  return s;
}

std::vector<std::byte> from_hex(const std::string& s) {
  std::vector<std::byte> out;
  for (std::size_t i = 0; i + 1 < s.size(); i += 2) out.push_back(std::byte(std::stoul(s.substr(i, 2), nullptr, 16)));
  return out;
}

}  // namespace

TEST_CASE("CR9 packs table PFN, entry count and the enable bit") {
  const auto r = Cr9Register::make(Pfn{0x3'FFFF'FFFF}, 256, true);
  CHECK(r.raw() == (0x3'FFFF'FFFFULL | (256ULL << 34) | (1ULL << 50)));
  CHECK(r.table_pfn() == Pfn{0x3'FFFF'FFFF});
  CHECK(r.num_entries() == 256);
  CHECK(r.enabled());
  auto off = r;
  off.set_enabled(false);
  CHECK(off.raw() == (r.raw() & ~(1ULL << 50)));
  CHECK_THROWS_AS(Cr9Register::make(Pfn{1ULL << 34}, 4, false), std::out_of_range);
}

TEST_CASE("entry word layout") {
  const auto w = entry_word::encode(Pfn{0x12345}, 0xBEEF, true, false);
  CHECK(w == ((0x12345ULL << 30) | (0xBEEFULL << 14) | 0b10));
  CHECK(entry_word::pfn(w) == Pfn{0x12345});
  CHECK(entry_word::tgid(w) == 0xBEEF);
  CHECK(entry_word::used(w));
  CHECK_FALSE(entry_word::valid(w));
  CHECK_THROWS_AS(entry_word::encode(Pfn{1ULL << 34}, 0, false, true), std::out_of_range);
}

TEST_CASE("table size counts the header slot") {
  CHECK(PreallocTable(256).capacity() == 255);
  CHECK(PreallocTable(256).pages_needed() == 1);
  CHECK(PreallocTable(257).pages_needed() == 2);
  CHECK(PreallocTable::with_capacity(10).num_entries() == 11);
  CHECK_THROWS_AS(PreallocTable(0), std::invalid_argument);
  CHECK_THROWS_AS(PreallocTable(65536), std::invalid_argument);
  CHECK_NOTHROW(PreallocTable(65535));

  PreallocTable header_only(1);
  CHECK(header_only.capacity() == 0);
  CHECK(header_only.produce(Pfn{1}) == ProduceResult::Full);
  CHECK_FALSE(header_only.consume(VirtualAddress{0x1000}, 1).has_value());
}

TEST_CASE("entries cycle empty -> valid -> used -> empty") {
  PreallocTable t = PreallocTable::with_capacity(3);
  CHECK(t.count(EntryState::Empty) == 3);
  CHECK_FALSE(t.consume(VirtualAddress{0x1000}, 1).has_value());

  for (std::uint64_t f = 10; f < 13; ++f) CHECK(t.produce(Pfn{f}) == ProduceResult::Produced);
  CHECK(t.produce(Pfn{99}) == ProduceResult::Full);
  CHECK(t.count(EntryState::Valid) == 3);

  CHECK(t.consume(VirtualAddress{0x1000}, 4) == Pfn{10});
  CHECK(t.consume(VirtualAddress{0x2000}, 5) == Pfn{11});
  CHECK(t.state_at(1) == EntryState::Used);
  CHECK(t.word0_at(1) == 0x1000);
  CHECK(t.produce(Pfn{99}) == ProduceResult::NeedsHarvest);

  const auto got = t.harvest();
  REQUIRE(got.size() == 2);
  CHECK(got[0] == PreallocRecord{VirtualAddress{0x1000}, 4, Pfn{10}});
  CHECK(got[1] == PreallocRecord{VirtualAddress{0x2000}, 5, Pfn{11}});
  CHECK(t.count(EntryState::Empty) == 2);
  CHECK(t.head_index() == 1);

  CHECK(t.produce(Pfn{20}) == ProduceResult::Produced);
  CHECK(t.consume(VirtualAddress{0x3000}, 6) == Pfn{12});
  CHECK(t.consume(VirtualAddress{0x4000}, 6) == Pfn{20});
  CHECK(t.tail_index() == 2);
}

TEST_CASE("harvest honours its limit and stops at the first non-used entry") {
  PreallocTable t = PreallocTable::with_capacity(4);
  for (std::uint64_t f = 0; f < 4; ++f) t.produce(Pfn{f});
  for (int i = 0; i < 3; ++i) t.consume(VirtualAddress::from_page(i + 1), 1);
  CHECK(t.harvest(2).size() == 2);
  CHECK(t.count(EntryState::Used) == 1);
  // Head still at slot 1, which is now empty: nothing more from head.
  CHECK(t.harvest().empty());
}

TEST_CASE("cleanup takes used entries by owner or in ring order") {
  PreallocTable t = PreallocTable::with_capacity(4);
  for (std::uint64_t f = 0; f < 4; ++f) t.produce(Pfn{f});
  t.consume(VirtualAddress{0x1000}, 1);
  t.consume(VirtualAddress{0x2000}, 2);
  t.consume(VirtualAddress{0x3000}, 1);

  REQUIRE(t.try_cleanup_lock());
  CHECK_FALSE(t.try_cleanup_lock());
  CHECK(t.cleanup_locked());
  const auto mine = t.take_used_matching(1);
  CHECK(mine.size() == 2);
  CHECK(t.state_at(2) == EntryState::Used);
  const auto rest = t.take_used(1);
  REQUIRE(rest.size() == 1);
  CHECK(rest[0].tgid == 2);
  t.release_cleanup_lock();
  CHECK_FALSE(t.cleanup_locked());
}

TEST_CASE("release_valid returns unconsumed frames and rewinds head to tail") {
  PreallocTable t = PreallocTable::with_capacity(4);
  for (std::uint64_t f = 0; f < 3; ++f) t.produce(Pfn{f});
  t.consume(VirtualAddress{0x1000}, 1);
  const auto back = t.release_valid();
  CHECK(back == std::vector<Pfn>{Pfn{1}, Pfn{2}});
  CHECK(t.head_index() == t.tail_index());
  CHECK(t.count(EntryState::Valid) == 0);
  CHECK(t.count(EntryState::Used) == 1);
}

TEST_CASE("serialized layout matches a hand-encoded snapshot") {
  PreallocTable t(4);
  t.produce(Pfn{0x10});
  t.produce(Pfn{0x11});
  t.consume(VirtualAddress{0x201000}, 7);
  const std::string golden =
      "03000000" "02000000" "04000000" "00000000"
      "0010200000000000" "02c0010004000000"
      "0000000000000000" "0100004004000000"
      "0000000000000000" "0000000000000000";
  CHECK(to_hex(t.serialize()) == golden);

  PreallocTable back = PreallocTable::deserialize(from_hex(golden));
  CHECK(to_hex(back.serialize()) == golden);
  CHECK(back.consume(VirtualAddress{0x5000}, 1) == Pfn{0x11});
}

TEST_CASE("deserialize rejects malformed snapshots") {
  const std::string ok = std::string(8, '0') + "01000000" "02000000" "00000000" + std::string(32, '0');
  CHECK_THROWS_AS(PreallocTable::deserialize(from_hex("00")), std::invalid_argument);
  // Entry count says 3 but only 2 slots present.
  CHECK_THROWS_AS(PreallocTable::deserialize(from_hex("01000000" "01000000" "03000000" "00000000" +
                                                      std::string(32, '0'))),
                  std::invalid_argument);
  // Head index 0 points at the header.
  CHECK_THROWS_AS(PreallocTable::deserialize(from_hex(ok)), std::invalid_argument);
  // Used and valid together.
  CHECK_THROWS_AS(PreallocTable::deserialize(from_hex("01000000" "01000000" "02000000" "00000000" +
                                                      std::string(16, '0') + "0300000000000000")),
                  std::invalid_argument);
}

TEST_CASE("single producer and single consumer threads lose and duplicate nothing") {
  constexpr std::uint64_t kFrames = 1'000'000;
  PreallocTable t = PreallocTable::with_capacity(15);
  std::vector<std::uint64_t> consumed;
  consumed.reserve(kFrames);
  std::vector<PreallocRecord> harvested;
  harvested.reserve(kFrames);

  std::thread consumer([&] {
    while (consumed.size() < kFrames) {
      const auto n = consumed.size();
      if (auto f = t.consume(VirtualAddress::from_page(n + 1), static_cast<Tgid>(n & 0xFFFF))) {
        consumed.push_back(raw(*f));
      } else {
        std::this_thread::yield();
      }
    }
  });
  std::uint64_t next = 0;
  while (next < kFrames) {
    switch (t.produce(Pfn{next})) {
      case ProduceResult::Produced: ++next; break;
      case ProduceResult::NeedsHarvest:
        for (auto& r : t.harvest()) harvested.push_back(r);
        break;
      case ProduceResult::Full: std::this_thread::yield(); break;
    }
  }
  consumer.join();
  for (auto& r : t.take_used()) harvested.push_back(r);

  bool in_order = true;
  for (std::uint64_t i = 0; i < kFrames; ++i) in_order = in_order && consumed[i] == i;
  CHECK(in_order);
  REQUIRE(harvested.size() == kFrames);
  std::vector<bool> seen(kFrames, false);
  bool records_ok = true;
  for (const auto& r : harvested) {
    const auto f = raw(r.pfn);
    records_ok = records_ok && f < kFrames && !seen[f] && r.va.page_number() == f + 1 &&
                 r.tgid == static_cast<Tgid>(f & 0xFFFF);
    if (f < kFrames) seen[f] = true;
  }
  CHECK(records_ok);
  CHECK(t.count(EntryState::Empty) == t.capacity());
}

TEST_CASE("cleanup lock admits one holder at a time") {
  PreallocTable t(4);
  std::atomic<int> holders{0};
  std::atomic<int> max_holders{0};
  std::atomic<int> acquisitions{0};
  std::vector<std::thread> ts;
  for (int k = 0; k < 4; ++k) {
    ts.emplace_back([&] {
      for (int i = 0; i < 20000; ++i) {
        if (!t.try_cleanup_lock()) {
          std::this_thread::yield();
          continue;
        }
        const int h = holders.fetch_add(1) + 1;
        int m = max_holders.load();
        while (h > m && !max_holders.compare_exchange_weak(m, h)) {}
        ++acquisitions;
        holders.fetch_sub(1);
        t.release_cleanup_lock();
      }
    });
  }
  for (auto& th : ts) th.join();
  CHECK(max_holders.load() == 1);
  CHECK(acquisitions.load() > 0);
  CHECK_FALSE(t.cleanup_locked());
}
