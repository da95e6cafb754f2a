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

#include "mfoesim/vm_core.hpp"

#include <algorithm>
#include <sstream>
#include <utility>

namespace mfoesim {

namespace {

constexpr std::uint64_t kCanonicalMask = 0xFFFF'0000'0000'0000ULL;
constexpr std::uint64_t kIndexMask = kEntriesPerTable - 1;

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

}  // namespace

VirtualAddress::VirtualAddress(std::uint64_t value) : value_(value) {
  if (value & kCanonicalMask) throw CanonicalityError("non-canonical user address " + hex(value));
}

AddressParts decompose(std::uint64_t va) {
  if (va & kCanonicalMask) throw CanonicalityError("non-canonical user address " + hex(va));
  AddressParts p;
  p.offset = static_cast<std::uint16_t>(va & (kPageSize - 1));
  p.pt = static_cast<std::uint16_t>((va >> 12) & kIndexMask);
  p.pd = static_cast<std::uint16_t>((va >> 21) & kIndexMask);
  p.pdpt = static_cast<std::uint16_t>((va >> 30) & kIndexMask);
  p.pml4 = static_cast<std::uint16_t>((va >> 39) & kIndexMask);
  return p;
}

std::uint64_t recompose(const AddressParts& p) {
  return (std::uint64_t{p.pml4} << 39) | (std::uint64_t{p.pdpt} << 30) | (std::uint64_t{p.pd} << 21) |
         (std::uint64_t{p.pt} << 12) | p.offset;
}

// ---------------------------------------------------------------------------
// PageTableEntry

PageTableEntry PageTableEntry::mfoeable_for(Tgid tgid, bool writable) {
  PageTableEntry e;
  e.set_mfoeable(true);
  e.set_rw(writable);
  e.set_frame_field(tgid);
  return e;
}

PageTableEntry PageTableEntry::mapped(Pfn pfn, bool writable) {
  PageTableEntry e;
  e.set_present(true);
  e.set_rw(writable);
  e.set_frame_field(mfoesim::raw(pfn));
  return e;
}

Pfn PageTableEntry::pfn() const {
  if (!present()) throw std::logic_error("pfn() on a non-present entry");
  return Pfn{frame_field()};
}

Tgid PageTableEntry::tgid() const {
  if (present() || !mfoeable()) throw std::logic_error("tgid() on an entry that does not carry one");
  return static_cast<Tgid>(frame_field());
}

void PageTableEntry::set_frame_field(std::uint64_t value) {
  if (value > (kFrameMask >> kFrameShift)) throw std::out_of_range("frame field overflow " + hex(value));
  raw_ = (raw_ & ~kFrameMask) | (value << kFrameShift);
}

// ---------------------------------------------------------------------------
// PageTable

PageTable::PageTable() : root_(std::make_unique<Root>()) {}
PageTable::~PageTable() = default;
PageTable::PageTable(PageTable&&) noexcept = default;
PageTable& PageTable::operator=(PageTable&&) noexcept = default;

PageTableEntry& PageTable::construct_path(VirtualAddress va) {
  const AddressParts p = decompose(va);
  auto& ptr = root_->ptrs[p.pml4];
  if (!ptr) {
    ptr = std::make_unique<Pointer>();
    ++nodes_created_;
  }
  auto& dir = ptr->dirs[p.pdpt];
  if (!dir) {
    dir = std::make_unique<Directory>();
    ++nodes_created_;
  }
  auto& table = dir->tables[p.pd];
  if (!table) {
    table = std::make_unique<LeafTable>();
    ++nodes_created_;
  }
  return table->entries[p.pt];
}

PageTableEntry* PageTable::find_leaf(VirtualAddress va) noexcept {
  return const_cast<PageTableEntry*>(std::as_const(*this).find_leaf(va));
}

const PageTableEntry* PageTable::find_leaf(VirtualAddress va) const noexcept {
  const AddressParts p = decompose(va);
  const auto& ptr = root_->ptrs[p.pml4];
  if (!ptr) return nullptr;
  const auto& dir = ptr->dirs[p.pdpt];
  if (!dir) return nullptr;
  const auto& table = dir->tables[p.pd];
  if (!table) return nullptr;
  return &table->entries[p.pt];
}

PageTableEntry& PageTable::leaf(VirtualAddress va) {
  PageTableEntry* e = find_leaf(va);
  if (e == nullptr) throw std::logic_error("leaf read on unconstructed path " + hex(va.value()));
  return *e;
}

std::size_t PageTable::count_present() const {
  std::size_t n = 0;
  for_each_leaf([&n](VirtualAddress, const PageTableEntry& e) { n += e.present() ? 1 : 0; });
  return n;
}

const Vma* AddressSpace::find_vma(VirtualAddress va) const noexcept {
  for (const Vma& v : vmas) {
    if (v.contains(va)) return &v;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// FrameAllocator

FrameAllocator::FrameAllocator(std::uint64_t total_frames, std::uint32_t nodes)
    : total_(total_frames), per_node_(0), free_(nodes), allocated_(total_frames, false) {
  if (nodes == 0) throw std::invalid_argument("frame allocator needs at least one node");
  if (total_frames < nodes) throw std::invalid_argument("fewer frames than nodes");
  per_node_ = total_frames / nodes;
  for (NodeId n = 0; n < nodes; ++n) {
    const std::uint64_t begin = n * per_node_;
    const std::uint64_t end = (n + 1 == nodes) ? total_frames : begin + per_node_;
    auto& list = free_[n];
    list.reserve(end - begin);
    // Popped from the back, so the lowest frame number goes out first.
    for (std::uint64_t f = end; f > begin; --f) list.push_back(Pfn{f - 1});
  }
}

Pfn FrameAllocator::allocate(NodeId preferred, ZeroingCharge charge) {
  if (preferred >= free_.size()) throw std::out_of_range("no such NUMA node");
  auto take = [&](NodeId n) {
    Pfn f = free_[n].back();
    free_[n].pop_back();
    allocated_[raw(f)] = true;
    ++zeroed_[charge == ZeroingCharge::Background ? 0 : 1];
    return f;
  };
  if (!free_[preferred].empty()) return take(preferred);
  for (NodeId n = 0; n < free_.size(); ++n) {
    if (!free_[n].empty()) return take(n);
  }
  throw OutOfMemory("all NUMA nodes are out of free frames");
}

void FrameAllocator::release(Pfn pfn) {
  if (raw(pfn) >= total_ || !allocated_[raw(pfn)]) {
    throw std::logic_error("release of frame that is not allocated: " + hex(raw(pfn)));
  }
  allocated_[raw(pfn)] = false;
  free_[node_of(pfn)].push_back(pfn);
}

NodeId FrameAllocator::node_of(Pfn pfn) const {
  if (raw(pfn) >= total_) throw std::out_of_range("frame outside managed memory");
  return static_cast<NodeId>(std::min<std::uint64_t>(raw(pfn) / per_node_, free_.size() - 1));
}

bool FrameAllocator::is_allocated(Pfn pfn) const { return raw(pfn) < total_ && allocated_[raw(pfn)]; }

std::uint64_t FrameAllocator::free_frames() const noexcept {
  std::uint64_t n = 0;
  for (const auto& l : free_) n += l.size();
  return n;
}

}  // namespace mfoesim
