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

#include "mfoesim/prealloc_table.hpp"

#include <stdexcept>
#include <string>

namespace mfoesim {

namespace {

void put_le(std::vector<std::byte>& out, std::size_t at, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out[at + i] = static_cast<std::byte>((v >> (8 * i)) & 0xFF);
}

std::uint64_t get_le(std::span<const std::byte> in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t{std::to_integer<std::uint8_t>(in[at + i])} << (8 * i);
  return v;
}

}  // namespace

Cr9Register Cr9Register::make(Pfn table_pfn, std::uint16_t num_entries, bool enable) {
  if (mfoesim::raw(table_pfn) >> kPfnBits) throw std::out_of_range("table PFN does not fit in 34 bits");
  Cr9Register r{mfoesim::raw(table_pfn) | (std::uint64_t{num_entries} << kEntriesShift)};
  r.set_enabled(enable);
  return r;
}

std::uint64_t entry_word::encode(Pfn pfn, Tgid tgid, bool used, bool valid) {
  if (raw(pfn) > kMaxPfn) throw std::out_of_range("PFN does not fit in 34 bits");
  return (raw(pfn) << kPfnShift) | (std::uint64_t{tgid} << kTgidShift) | (used ? kUsed : 0) |
         (valid ? kValid : 0);
}

PreallocTable::PreallocTable(std::uint32_t num_entries)
    : num_entries_(num_entries), header_(std::make_unique<Header>()) {
  if (num_entries == 0 || num_entries > kMaxEntries) {
    throw std::invalid_argument("pre-allocation table needs 1.." + std::to_string(kMaxEntries) + " entries");
  }
  header_->num_entries.store(num_entries, std::memory_order_relaxed);
  if (num_entries > 1) slots_ = std::make_unique<Slot[]>(num_entries - 1);
}

PreallocTable PreallocTable::deserialize(std::span<const std::byte> bytes) {
  if (bytes.size() < kEntryBytes || bytes.size() % kEntryBytes != 0) {
    throw std::invalid_argument("snapshot size is not a positive multiple of 16 bytes");
  }
  const auto n = static_cast<std::uint32_t>(get_le(bytes, 8, 4));
  if (std::size_t{n} * kEntryBytes != bytes.size()) throw std::invalid_argument("snapshot entry count mismatch");
  PreallocTable t(n);
  const auto head = static_cast<std::uint32_t>(get_le(bytes, 0, 4));
  const auto tail = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
  if (n > 1 && (head < 1 || head >= n || tail < 1 || tail >= n)) {
    throw std::invalid_argument("snapshot head/tail out of range");
  }
  t.header_->head.store(head, std::memory_order_relaxed);
  t.header_->tail.store(tail, std::memory_order_relaxed);
  t.header_->locks.store(static_cast<std::uint32_t>(get_le(bytes, 12, 4)), std::memory_order_relaxed);
  for (std::uint32_t i = 1; i < n; ++i) {
    const std::uint64_t w1 = get_le(bytes, i * kEntryBytes + 8, 8);
    if (entry_word::used(w1) && entry_word::valid(w1)) throw std::invalid_argument("entry both used and valid");
    t.slot(i).va.store(get_le(bytes, i * kEntryBytes, 8), std::memory_order_relaxed);
    t.slot(i).meta.store(w1, std::memory_order_relaxed);
  }
  std::atomic_thread_fence(std::memory_order_release);
  return t;
}

std::uint32_t PreallocTable::pages_needed() const noexcept {
  return static_cast<std::uint32_t>((std::uint64_t{num_entries_} * kEntryBytes + kPageSize - 1) / kPageSize);
}

ProduceResult PreallocTable::produce(Pfn frame) {
  if (num_entries_ == 1) return ProduceResult::Full;
  const std::uint32_t h = header_->head.load(std::memory_order_relaxed);
  Slot& s = slot(h);
  const std::uint64_t w = s.meta.load(std::memory_order_acquire);
  if (entry_word::valid(w)) return ProduceResult::Full;
  if (entry_word::used(w)) return ProduceResult::NeedsHarvest;
  const std::uint64_t word = entry_word::encode(frame, 0, false, true);
  s.va.store(0, std::memory_order_relaxed);
  // Publishing valid last makes the PFN visible before the consumer can see the entry.
  s.meta.store(word, std::memory_order_release);
  header_->head.store(next(h), std::memory_order_release);
  return ProduceResult::Produced;
}

PreallocRecord PreallocTable::clear_used(Slot& s) {
  const std::uint64_t w = s.meta.load(std::memory_order_acquire);
  PreallocRecord r{VirtualAddress{s.va.load(std::memory_order_relaxed)}, entry_word::tgid(w), entry_word::pfn(w)};
  s.va.store(0, std::memory_order_relaxed);
  s.meta.store(0, std::memory_order_release);
  return r;
}

std::vector<PreallocRecord> PreallocTable::harvest(std::size_t limit) {
  std::vector<PreallocRecord> out;
  if (num_entries_ == 1) return out;
  std::uint32_t i = header_->head.load(std::memory_order_relaxed);
  for (std::uint32_t walked = 0; walked < capacity() && out.size() < limit; ++walked, i = next(i)) {
    Slot& s = slot(i);
    if (!entry_word::used(s.meta.load(std::memory_order_acquire))) break;
    out.push_back(clear_used(s));
  }
  return out;
}

std::optional<Pfn> PreallocTable::consume(VirtualAddress va, Tgid tgid) {
  if (num_entries_ == 1) return std::nullopt;
  const std::uint32_t t = header_->tail.load(std::memory_order_relaxed);
  Slot& s = slot(t);
  const std::uint64_t w = s.meta.load(std::memory_order_acquire);
  if (!entry_word::valid(w)) return std::nullopt;
  const Pfn pfn = entry_word::pfn(w);
  s.va.store(va.value(), std::memory_order_relaxed);
  s.meta.store(entry_word::encode(pfn, tgid, true, false), std::memory_order_release);
  header_->tail.store(next(t), std::memory_order_release);
  return pfn;
}

bool PreallocTable::try_cleanup_lock() noexcept {
  return (header_->locks.fetch_or(1U, std::memory_order_acq_rel) & 1U) == 0;
}

void PreallocTable::release_cleanup_lock() noexcept { header_->locks.fetch_and(~1U, std::memory_order_release); }

std::vector<PreallocRecord> PreallocTable::take_used_matching(Tgid tgid) {
  std::vector<PreallocRecord> out;
  for (std::uint32_t i = 1; i < num_entries_; ++i) {
    Slot& s = slot(i);
    const std::uint64_t w = s.meta.load(std::memory_order_acquire);
    if (entry_word::used(w) && entry_word::tgid(w) == tgid) out.push_back(clear_used(s));
  }
  return out;
}

std::vector<PreallocRecord> PreallocTable::take_used(std::size_t limit) {
  std::vector<PreallocRecord> out;
  if (num_entries_ == 1) return out;
  std::uint32_t i = header_->head.load(std::memory_order_relaxed);
  for (std::uint32_t walked = 0; walked < capacity() && out.size() < limit; ++walked, i = next(i)) {
    Slot& s = slot(i);
    if (entry_word::used(s.meta.load(std::memory_order_acquire))) out.push_back(clear_used(s));
  }
  return out;
}

std::vector<Pfn> PreallocTable::release_valid() {
  std::vector<Pfn> out;
  for (std::uint32_t i = 1; i < num_entries_; ++i) {
    Slot& s = slot(i);
    const std::uint64_t w = s.meta.load(std::memory_order_acquire);
    if (!entry_word::valid(w)) continue;
    out.push_back(entry_word::pfn(w));
    s.va.store(0, std::memory_order_relaxed);
    s.meta.store(0, std::memory_order_release);
  }
  header_->head.store(header_->tail.load(std::memory_order_acquire), std::memory_order_release);
  return out;
}

EntryState PreallocTable::state_at(std::uint32_t index) const noexcept {
  if (index == 0 || index >= num_entries_) return EntryState::Empty;
  const std::uint64_t w = slot(index).meta.load(std::memory_order_acquire);
  if (entry_word::valid(w)) return EntryState::Valid;
  if (entry_word::used(w)) return EntryState::Used;
  return EntryState::Empty;
}

std::uint64_t PreallocTable::word0_at(std::uint32_t index) const noexcept {
  return index == 0 || index >= num_entries_ ? 0 : slot(index).va.load(std::memory_order_acquire);
}

std::uint64_t PreallocTable::word1_at(std::uint32_t index) const noexcept {
  return index == 0 || index >= num_entries_ ? 0 : slot(index).meta.load(std::memory_order_acquire);
}

std::uint32_t PreallocTable::count(EntryState st) const noexcept {
  std::uint32_t n = 0;
  for (std::uint32_t i = 1; i < num_entries_; ++i) n += state_at(i) == st ? 1 : 0;
  return n;
}

std::vector<Pfn> PreallocTable::frames_in(EntryState st) const {
  std::vector<Pfn> out;
  for (std::uint32_t i = 1; i < num_entries_; ++i) {
    if (state_at(i) == st) out.push_back(entry_word::pfn(word1_at(i)));
  }
  return out;
}

std::vector<std::byte> PreallocTable::serialize() const {
  std::vector<std::byte> out(std::size_t{num_entries_} * kEntryBytes);
  put_le(out, 0, header_->head.load(std::memory_order_acquire), 4);
  put_le(out, 4, header_->tail.load(std::memory_order_acquire), 4);
  put_le(out, 8, header_->num_entries.load(std::memory_order_acquire), 4);
  put_le(out, 12, header_->locks.load(std::memory_order_acquire), 4);
  for (std::uint32_t i = 1; i < num_entries_; ++i) {
    put_le(out, i * kEntryBytes, word0_at(i), 8);
    put_le(out, i * kEntryBytes + 8, word1_at(i), 8);
  }
  return out;
}

}  // namespace mfoesim
