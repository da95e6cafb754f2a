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

// Per-core pre-allocation table: a lockless single-producer/single-consumer
// ring of 16-byte entries. Slot 0 is the header (head, tail, entry count,
// lock bits; four bytes each), slots 1..num_entries-1 carry frames.
//
// Entry word 0 is the faulting virtual address. Entry word 1 packs
//
//   63            30 29         14 13      2   1      0
//  +----------------+-------------+---------+------+-------+
//  |   PFN (34 b)   |  TGID (16 b) | reserved | used | valid |
//  +----------------+-------------+---------+------+-------+
//
// The producer (kernel background thread) only moves head; the consumer
// (the MFOE on that core) only moves tail. Fullness and emptiness are read
// from the entry state bits, never from comparing the two indices.

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mfoesim/vm_core.hpp"

namespace mfoesim {

/// Per-core control register published to the MFOE.
///
/// bits 33..0 table PFN, bits 49..34 entry count, bit 50 MFOE_ENABLE.
class Cr9Register {
 public:
  static constexpr unsigned kPfnBits = 34;
  static constexpr unsigned kEntriesShift = 34;
  static constexpr unsigned kEnableBit = 50;

  constexpr Cr9Register() = default;
  constexpr explicit Cr9Register(std::uint64_t raw) : raw_(raw) {}

  static Cr9Register make(Pfn table_pfn, std::uint16_t num_entries, bool enable);

  constexpr std::uint64_t raw() const noexcept { return raw_; }
  Pfn table_pfn() const noexcept { return Pfn{raw_ & ((std::uint64_t{1} << kPfnBits) - 1)}; }
  std::uint16_t num_entries() const noexcept { return static_cast<std::uint16_t>(raw_ >> kEntriesShift); }
  bool enabled() const noexcept { return (raw_ >> kEnableBit) & 1U; }
  void set_enabled(bool on) noexcept {
    raw_ = on ? (raw_ | (std::uint64_t{1} << kEnableBit)) : (raw_ & ~(std::uint64_t{1} << kEnableBit));
  }

  friend constexpr bool operator==(const Cr9Register&, const Cr9Register&) = default;

 private:
  std::uint64_t raw_ = 0;
};

enum class EntryState { Empty, Valid, Used };
enum class ProduceResult { Produced, Full, NeedsHarvest };

/// A consumed entry handed back to post-fault processing.
struct PreallocRecord {
  VirtualAddress va;
  Tgid tgid = 0;
  Pfn pfn{};

  friend bool operator==(const PreallocRecord&, const PreallocRecord&) = default;
};

namespace entry_word {

inline constexpr unsigned kPfnShift = 30;
inline constexpr unsigned kTgidShift = 14;
inline constexpr std::uint64_t kUsed = std::uint64_t{1} << 1;
inline constexpr std::uint64_t kValid = std::uint64_t{1} << 0;
inline constexpr std::uint64_t kMaxPfn = (std::uint64_t{1} << 34) - 1;

std::uint64_t encode(Pfn pfn, Tgid tgid, bool used, bool valid);
inline Pfn pfn(std::uint64_t w) { return Pfn{w >> kPfnShift}; }
inline Tgid tgid(std::uint64_t w) { return static_cast<Tgid>((w >> kTgidShift) & 0xFFFF); }
inline bool used(std::uint64_t w) { return w & kUsed; }
inline bool valid(std::uint64_t w) { return w & kValid; }

}  // namespace entry_word

class PreallocTable {
 public:
  static constexpr std::size_t kEntryBytes = 16;
  static constexpr std::uint32_t kMaxEntries = std::numeric_limits<std::uint16_t>::max();
  static constexpr std::size_t kNoLimit = std::numeric_limits<std::size_t>::max();

  /// `num_entries` counts every 16-byte slot including the header, so a
  /// table holds num_entries - 1 frames (256 slots fill one 4 KiB page).
  explicit PreallocTable(std::uint32_t num_entries);

  /// Table able to hold exactly `frames` frames.
  static PreallocTable with_capacity(std::uint32_t frames) { return PreallocTable(frames + 1); }

  /// Rebuilds a table from a serialized snapshot.
  static PreallocTable deserialize(std::span<const std::byte> bytes);

  std::uint32_t num_entries() const noexcept { return num_entries_; }
  std::uint32_t capacity() const noexcept { return num_entries_ - 1; }
  std::uint32_t head_index() const noexcept { return header_->head.load(std::memory_order_acquire); }
  std::uint32_t tail_index() const noexcept { return header_->tail.load(std::memory_order_acquire); }
  /// Pages of physical memory the table itself occupies.
  std::uint32_t pages_needed() const noexcept;

  // Producer side ---------------------------------------------------------

  /// Stores `frame` in the head entry and advances head. Stops at a still
  /// valid entry (Full) or at a consumed one awaiting harvest.
  ProduceResult produce(Pfn frame);
  EntryState head_state() const noexcept { return state_at(head_index()); }

  /// Walks forward from head while entries are used, clearing them and
  /// returning their records. Head does not move; produce() refills the
  /// cleared slots in place.
  std::vector<PreallocRecord> harvest(std::size_t limit = kNoLimit);

  // Consumer side ---------------------------------------------------------

  /// Takes the frame at tail, writes back va/tgid with used=1, valid=0 and
  /// advances tail. Empty when the tail entry is not valid.
  std::optional<Pfn> consume(VirtualAddress va, Tgid tgid);

  // Cleanup (header lock bit 0) -------------------------------------------

  bool try_cleanup_lock() noexcept;
  void release_cleanup_lock() noexcept;
  bool cleanup_locked() const noexcept { return header_->locks.load(std::memory_order_acquire) & 1U; }

  /// Clears every used entry stamped with `tgid`, wherever it sits in the
  /// ring. Caller holds the cleanup lock.
  std::vector<PreallocRecord> take_used_matching(Tgid tgid);
  /// Clears up to `limit` used entries in ring order starting at head.
  /// Caller holds the cleanup lock.
  std::vector<PreallocRecord> take_used(std::size_t limit = kNoLimit);
  /// Disable path: clears every valid entry and returns its frame; head is
  /// rewound to tail so a later refill starts where the consumer reads.
  /// Requires that neither producer nor consumer is running.
  std::vector<Pfn> release_valid();

  // Inspection ------------------------------------------------------------

  EntryState state_at(std::uint32_t index) const noexcept;
  std::uint64_t word0_at(std::uint32_t index) const noexcept;
  std::uint64_t word1_at(std::uint32_t index) const noexcept;
  std::uint32_t count(EntryState s) const noexcept;
  std::vector<Pfn> frames_in(EntryState s) const;

  /// 16 * num_entries bytes, little-endian, header first.
  std::vector<std::byte> serialize() const;

 private:
  struct Header {
    std::atomic<std::uint32_t> head{1};
    std::atomic<std::uint32_t> tail{1};
    std::atomic<std::uint32_t> num_entries{0};
    std::atomic<std::uint32_t> locks{0};
  };
  struct alignas(16) Slot {
    std::atomic<std::uint64_t> va{0};
    std::atomic<std::uint64_t> meta{0};
  };
  static_assert(sizeof(Slot) == kEntryBytes);

  std::uint32_t next(std::uint32_t i) const noexcept { return i + 1 == num_entries_ ? 1 : i + 1; }
  Slot& slot(std::uint32_t i) noexcept { return slots_[i - 1]; }
  const Slot& slot(std::uint32_t i) const noexcept { return slots_[i - 1]; }
  PreallocRecord clear_used(Slot& s);

  std::uint32_t num_entries_;
  std::unique_ptr<Header> header_;
  std::unique_ptr<Slot[]> slots_;
};

}  // namespace mfoesim
