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

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

namespace mfoesim {

/// Physical frame number. Kept distinct from plain integers so PFNs, TGIDs
/// and indices cannot be mixed up silently.
enum class Pfn : std::uint64_t {};

constexpr std::uint64_t raw(Pfn pfn) noexcept { return static_cast<std::uint64_t>(pfn); }

using Tgid = std::uint16_t;
using CoreId = std::uint32_t;
using NodeId = std::uint32_t;
using Cycles = std::int64_t;

inline constexpr std::uint64_t kPageShift = 12;
inline constexpr std::uint64_t kPageSize = std::uint64_t{1} << kPageShift;
inline constexpr std::size_t kEntriesPerTable = 512;

class CanonicalityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class OutOfMemory : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// User-space canonical virtual address (bits 63..48 clear).
class VirtualAddress {
 public:
  constexpr VirtualAddress() = default;
  /// Throws CanonicalityError when any of bits 63..48 is set.
  explicit VirtualAddress(std::uint64_t value);

  static VirtualAddress from_page(std::uint64_t vpn) { return VirtualAddress{vpn << kPageShift}; }

  constexpr std::uint64_t value() const noexcept { return value_; }
  constexpr std::uint64_t page_number() const noexcept { return value_ >> kPageShift; }
  constexpr VirtualAddress page_base() const noexcept {
    VirtualAddress va;
    va.value_ = value_ & ~(kPageSize - 1);
    return va;
  }

  friend constexpr auto operator<=>(const VirtualAddress&, const VirtualAddress&) = default;

 private:
  std::uint64_t value_ = 0;
};

struct AddressParts {
  std::uint16_t pml4 = 0;
  std::uint16_t pdpt = 0;
  std::uint16_t pd = 0;
  std::uint16_t pt = 0;
  std::uint16_t offset = 0;

  friend constexpr bool operator==(const AddressParts&, const AddressParts&) = default;
};

/// Splits a raw address into four 9-bit table indices and the page offset.
AddressParts decompose(std::uint64_t va);
inline AddressParts decompose(VirtualAddress va) { return decompose(va.value()); }
std::uint64_t recompose(const AddressParts& parts);

/// 64-bit leaf page-table entry.
///
/// Layout: present (bit 0), rw (bit 1), mfoeable (bit 2), lock (bit 9, the
/// first AVL bit), frame field (bits 47..12). The frame field holds a PFN
/// when present=1 and the owning TGID when present=0 with mfoeable=1.
class PageTableEntry {
 public:
  static constexpr std::uint64_t kPresent = std::uint64_t{1} << 0;
  static constexpr std::uint64_t kRw = std::uint64_t{1} << 1;
  static constexpr std::uint64_t kMfoeable = std::uint64_t{1} << 2;
  static constexpr std::uint64_t kLock = std::uint64_t{1} << 9;
  static constexpr unsigned kFrameShift = 12;
  static constexpr std::uint64_t kFrameMask = ((std::uint64_t{1} << 36) - 1) << kFrameShift;

  constexpr PageTableEntry() = default;
  constexpr explicit PageTableEntry(std::uint64_t raw) : raw_(raw) {}

  /// Pre-fault form: legal, not yet backed, owned by `tgid`.
  static PageTableEntry mfoeable_for(Tgid tgid, bool writable);
  static PageTableEntry mapped(Pfn pfn, bool writable);

  constexpr std::uint64_t raw() const noexcept { return raw_; }
  constexpr bool present() const noexcept { return raw_ & kPresent; }
  constexpr bool rw() const noexcept { return raw_ & kRw; }
  constexpr bool mfoeable() const noexcept { return raw_ & kMfoeable; }
  constexpr bool locked() const noexcept { return raw_ & kLock; }
  constexpr std::uint64_t frame_field() const noexcept { return (raw_ & kFrameMask) >> kFrameShift; }

  Pfn pfn() const;
  Tgid tgid() const;

  void set_present(bool on) noexcept { set_bit(kPresent, on); }
  void set_rw(bool on) noexcept { set_bit(kRw, on); }
  void set_mfoeable(bool on) noexcept { set_bit(kMfoeable, on); }
  void set_locked(bool on) noexcept { set_bit(kLock, on); }
  void set_frame_field(std::uint64_t value);

  /// Atomic-in-model test-and-set of the lock bit. Returns the previous raw
  /// value so the caller sees present/mfoeable as they were at acquisition.
  PageTableEntry test_and_set_lock() noexcept {
    PageTableEntry before = *this;
    raw_ |= kLock;
    return before;
  }

  friend constexpr bool operator==(const PageTableEntry&, const PageTableEntry&) = default;

 private:
  void set_bit(std::uint64_t bit, bool on) noexcept { raw_ = on ? (raw_ | bit) : (raw_ & ~bit); }

  std::uint64_t raw_ = 0;
};

/// Four-level radix page table. The root (PML4) always exists; lower levels
/// are constructed on demand.
class PageTable {
 public:
  PageTable();
  ~PageTable();
  PageTable(PageTable&&) noexcept;
  PageTable& operator=(PageTable&&) noexcept;
  PageTable(const PageTable&) = delete;
  PageTable& operator=(const PageTable&) = delete;

  /// Builds any missing intermediate levels on `va`'s path and returns the leaf.
  PageTableEntry& construct_path(VirtualAddress va);

  /// Leaf entry if every level on the path exists, nullptr otherwise.
  PageTableEntry* find_leaf(VirtualAddress va) noexcept;
  const PageTableEntry* find_leaf(VirtualAddress va) const noexcept;

  /// Leaf on a path the caller knows is constructed. Reaching an absent path
  /// here is a simulator bug and throws std::logic_error.
  PageTableEntry& leaf(VirtualAddress va);

  /// Table nodes created below the root (PDPT + PD + PT pages).
  std::size_t intermediate_nodes() const noexcept { return nodes_created_; }

  /// Number of present leaves, walking every constructed leaf table.
  std::size_t count_present() const;

  template <typename Fn>
  void for_each_leaf(Fn&& fn) const;

 private:
  struct LeafTable {
    std::array<PageTableEntry, kEntriesPerTable> entries{};
  };
  struct Directory {
    std::array<std::unique_ptr<LeafTable>, kEntriesPerTable> tables{};
  };
  struct Pointer {
    std::array<std::unique_ptr<Directory>, kEntriesPerTable> dirs{};
  };
  struct Root {
    std::array<std::unique_ptr<Pointer>, kEntriesPerTable> ptrs{};
  };

  std::unique_ptr<Root> root_;
  std::size_t nodes_created_ = 0;
};

template <typename Fn>
void PageTable::for_each_leaf(Fn&& fn) const {
  for (std::size_t a = 0; a < kEntriesPerTable; ++a) {
    const auto& p = root_->ptrs[a];
    if (!p) continue;
    for (std::size_t b = 0; b < kEntriesPerTable; ++b) {
      const auto& d = p->dirs[b];
      if (!d) continue;
      for (std::size_t c = 0; c < kEntriesPerTable; ++c) {
        const auto& t = d->tables[c];
        if (!t) continue;
        for (std::size_t e = 0; e < kEntriesPerTable; ++e) {
          const std::uint64_t va = recompose({static_cast<std::uint16_t>(a), static_cast<std::uint16_t>(b),
                                              static_cast<std::uint16_t>(c), static_cast<std::uint16_t>(e), 0});
          fn(VirtualAddress{va}, t->entries[e]);
        }
      }
    }
  }
}

/// Anonymous virtual memory area [start, end).
struct Vma {
  VirtualAddress start;
  VirtualAddress end;
  bool writable = true;
  bool vm_mfoe = false;

  bool contains(VirtualAddress va) const noexcept { return va >= start && va < end; }
  std::uint64_t pages() const noexcept { return (end.value() - start.value()) >> kPageShift; }
};

/// One process's view of memory: its TGID, VMAs and page table.
struct AddressSpace {
  explicit AddressSpace(Tgid id) : tgid(id) {}

  Tgid tgid;
  std::vector<Vma> vmas;
  PageTable page_table;

  const Vma* find_vma(VirtualAddress va) const noexcept;
};

enum class ZeroingCharge { Background, FaultingCore };

/// Physical frame allocator with one free list per NUMA node.
///
/// Frames [0, total) are split into contiguous equal ranges, one per node.
/// Allocation prefers the caller's node and falls back to the lowest other
/// node with free frames.
class FrameAllocator {
 public:
  FrameAllocator(std::uint64_t total_frames, std::uint32_t nodes);

  /// Throws OutOfMemory when every node is empty.
  Pfn allocate(NodeId preferred, ZeroingCharge charge = ZeroingCharge::Background);
  /// Returns a frame to its home node. Releasing a frame that is not
  /// allocated throws std::logic_error.
  void release(Pfn pfn);

  NodeId node_of(Pfn pfn) const;
  bool is_allocated(Pfn pfn) const;

  std::uint32_t nodes() const noexcept { return static_cast<std::uint32_t>(free_.size()); }
  std::uint64_t total_frames() const noexcept { return total_; }
  std::uint64_t free_frames() const noexcept;
  std::uint64_t free_frames(NodeId node) const { return free_.at(node).size(); }
  std::uint64_t allocated_frames() const noexcept { return total_ - free_frames(); }

  /// Frames zeroed on behalf of each side; the zeroing itself costs nothing here,
  /// its time is folded into whichever throughput/latency the caller charges.
  std::uint64_t zeroed_in_background() const noexcept { return zeroed_[0]; }
  std::uint64_t zeroed_on_fault_path() const noexcept { return zeroed_[1]; }

 private:
  std::uint64_t total_;
  std::uint64_t per_node_;
  std::vector<std::vector<Pfn>> free_;
  std::vector<bool> allocated_;
  std::array<std::uint64_t, 2> zeroed_{};
};

}  // namespace mfoesim
