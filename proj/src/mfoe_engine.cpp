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

#include "mfoesim/mfoe_engine.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace mfoesim {

namespace {

constexpr std::array<std::string_view, kFaultKindCount> kKindNames = {
    "tlb_hit",   "walk_hit",         "mfoe_hit", "mfoe_miss",    "non_mfoeable", "kernel_fault",
    "lock_wait", "protection_fault", "segv",     "software_hit", "software_miss",
};

}  // namespace

std::string_view to_string(FaultKind k) { return kKindNames.at(static_cast<std::size_t>(k)); }

std::optional<FaultKind> fault_kind_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == s) return static_cast<FaultKind>(i);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Tlb

Tlb::Tlb(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("TLB capacity must be positive");
}

std::optional<Tlb::Translation> Tlb::lookup(Tgid asid, std::uint64_t vpn) {
  auto it = index_.find({asid, vpn});
  if (it == index_.end()) return std::nullopt;
  lru_.splice(lru_.begin(), lru_, it->second);
  return it->second->t;
}

void Tlb::insert(Tgid asid, std::uint64_t vpn, Translation t) {
  auto it = index_.find({asid, vpn});
  if (it != index_.end()) {
    it->second->t = t;
    lru_.splice(lru_.begin(), lru_, it->second);
    return;
  }
  if (index_.size() == capacity_) {
    const Entry& victim = lru_.back();
    index_.erase({victim.asid, victim.vpn});
    lru_.pop_back();
  }
  lru_.push_front({asid, vpn, t});
  index_[{asid, vpn}] = lru_.begin();
}

void Tlb::invalidate(Tgid asid, std::uint64_t vpn) {
  auto it = index_.find({asid, vpn});
  if (it == index_.end()) return;
  lru_.erase(it->second);
  index_.erase(it);
}

void Tlb::flush() noexcept {
  lru_.clear();
  index_.clear();
}

// ---------------------------------------------------------------------------
// Mmu

Mmu::Mmu(const ModelParameters& params, MmuConfig config, KernelServices& kernel, std::uint64_t seed)
    : params_(params),
      kernel_(kernel),
      cr9_(config.cores),
      inflight_(config.cores),
      inflight_end_(config.cores, 0),
      baseline_(LatencyDistribution::lognormal(params.baseline_fault_mean_cycles, params.baseline_fault_p95_cycles)),
      rng_(seed) {
  params_.validate();
  if (config.cores == 0) throw std::invalid_argument("need at least one core");
  tlbs_.reserve(config.cores);
  for (std::uint32_t c = 0; c < config.cores; ++c) tlbs_.emplace_back(config.tlb_entries);
}

FaultHandler Mmu::begin(CoreId core, AddressSpace& space, VirtualAddress va, bool is_write) const {
  if (core >= cores()) throw std::out_of_range("no such core");
  FaultHandler h;
  h.core = core;
  h.space = &space;
  h.va = va.page_base();
  h.is_write = is_write;
  return h;
}

PageTableEntry* Mmu::leaf_of(const FaultHandler& h) const { return h.space->page_table.find_leaf(h.va); }

void Mmu::to_kernel(FaultHandler& h, FaultKind kind) const {
  h.kind = kind;
  h.phase = HandlerPhase::KernelLock;
}

void Mmu::fill_tlb(const FaultHandler& h, const PageTableEntry& e) {
  tlbs_[h.core].insert(h.space->tgid, h.va.page_number(), {e.pfn(), e.rw()});
}

bool Mmu::runnable(const FaultHandler& h) const {
  const PageTableEntry* e = leaf_of(h);
  switch (h.phase) {
    case HandlerPhase::Done:
      return false;
    case HandlerPhase::Wait:
      // Busy-wait until the owner has both unlocked and installed the page.
      return e != nullptr && !e->locked() && e->present();
    case HandlerPhase::KernelLock:
      return e == nullptr || !e->locked();
    default:
      return true;
  }
}

StepStatus Mmu::step(FaultHandler& h) {
  if (h.done()) return StepStatus::Done;
  if (!runnable(h)) return StepStatus::Blocked;
  PageTableEntry* e = leaf_of(h);

  switch (h.phase) {
    case HandlerPhase::Walk: {
      if (e == nullptr) {
        to_kernel(h, FaultKind::NonMfoeable);
        break;
      }
      if (e->present()) {
        if (h.is_write && !e->rw()) {
          h.kind = FaultKind::ProtectionFault;
        } else {
          fill_tlb(h, *e);
          h.kind = FaultKind::WalkHit;
        }
        h.phase = HandlerPhase::Done;
        break;
      }
      if (!cr9_[h.core].enabled()) {
        to_kernel(h, FaultKind::KernelFault);
        break;
      }
      if (!e->mfoeable()) {
        to_kernel(h, FaultKind::NonMfoeable);
        break;
      }
      if (h.is_write && !e->rw()) {
        h.kind = FaultKind::ProtectionFault;
        h.phase = HandlerPhase::Done;
        break;
      }
      h.phase = HandlerPhase::Lock;
      break;
    }

    case HandlerPhase::Lock: {
      // Locked read-modify-write of the leaf.
      const PageTableEntry before = *e;
      if (before.locked()) {
        h.phase = HandlerPhase::Wait;
        break;
      }
      if (before.present()) {
        fill_tlb(h, before);
        h.kind = FaultKind::LockWait;
        h.phase = HandlerPhase::Done;
        break;
      }
      if (!before.mfoeable()) {
        to_kernel(h, FaultKind::NonMfoeable);
        break;
      }
      e->set_locked(true);
      h.phase = HandlerPhase::Consume;
      break;
    }

    case HandlerPhase::Consume: {
      PreallocTable* table = kernel_.table_at(cr9_[h.core].table_pfn());
      if (table == nullptr) throw std::logic_error("CR9 points at no pre-allocation table");
      const std::optional<Pfn> pfn = table->consume(h.va, e->tgid());
      if (!pfn) {
        h.kind = FaultKind::MfoeMiss;
      } else {
        h.kind = FaultKind::MfoeHit;
        h.frame = pfn;
        h.frame_from_table = true;
      }
      h.phase = pfn ? HandlerPhase::Install : HandlerPhase::Unlock;
      break;
    }

    case HandlerPhase::Install: {
      PageTableEntry installed = PageTableEntry::mapped(*h.frame, e->rw());
      installed.set_mfoeable(true);
      installed.set_locked(true);
      *e = installed;
      h.phase = HandlerPhase::Unlock;
      break;
    }

    case HandlerPhase::Unlock:
      e->set_locked(false);
      h.phase = h.kind == FaultKind::MfoeMiss ? HandlerPhase::KernelLock : HandlerPhase::FillTlb;
      break;

    case HandlerPhase::FillTlb:
      fill_tlb(h, *e);
      h.phase = HandlerPhase::Done;
      break;

    case HandlerPhase::Wait:
      fill_tlb(h, *e);
      h.kind = FaultKind::LockWait;
      h.phase = HandlerPhase::Done;
      break;

    case HandlerPhase::KernelLock: {
      const Vma* vma = h.space->find_vma(h.va);
      if (vma == nullptr) {
        h.kind = FaultKind::Segv;
        h.phase = HandlerPhase::Done;
        break;
      }
      if (h.is_write && !vma->writable) {
        h.kind = FaultKind::ProtectionFault;
        h.phase = HandlerPhase::Done;
        break;
      }
      // The kernel builds a missing path the same way the pre-fault thread does.
      PageTableEntry& leaf = h.space->page_table.construct_path(h.va);
      leaf.test_and_set_lock();
      h.phase = HandlerPhase::KernelCheck;
      break;
    }

    case HandlerPhase::KernelCheck:
      if (e->present()) {
        h.phase = HandlerPhase::KernelUnlock;
      } else {
        h.frame = kernel_.allocate_inline(h.core);
        h.frame_from_allocator = true;
        h.phase = HandlerPhase::KernelInstall;
      }
      break;

    case HandlerPhase::KernelInstall: {
      const Vma* vma = h.space->find_vma(h.va);
      PageTableEntry installed = PageTableEntry::mapped(*h.frame, vma->writable);
      installed.set_mfoeable(e->mfoeable());
      installed.set_locked(true);
      *e = installed;
      kernel_.account_inline(h.space->tgid, h.va, *h.frame);
      h.phase = HandlerPhase::KernelUnlock;
      break;
    }

    case HandlerPhase::KernelUnlock:
      e->set_locked(false);
      h.phase = HandlerPhase::Done;
      break;

    case HandlerPhase::Done:
      break;
  }
  return h.done() ? StepStatus::Done : StepStatus::Progressed;
}

Cycles Mmu::sample_kernel_latency() {
  return std::max<Cycles>(1, std::llround(baseline_.sample(rng_)));
}

FaultOutcome Mmu::access(CoreId core, AddressSpace& space, VirtualAddress va, bool is_write, Cycles now) {
  if (core >= cores()) throw std::out_of_range("no such core");
  if (inflight_[core]) throw std::logic_error("core issued an access while its fault is still in flight");

  FaultOutcome out;
  if (auto t = tlbs_[core].lookup(space.tgid, va.page_number())) {
    out.kind = (is_write && !t->rw) ? FaultKind::ProtectionFault : FaultKind::TlbHit;
    out.pfn = t->pfn;
    return out;
  }

  FaultHandler h = begin(core, space, va, is_write);
  const auto key = std::make_pair(space.tgid, h.va.page_number());
  for (;;) {
    if (h.done()) {
      out.kind = h.kind;
      if (const PageTableEntry* e = leaf_of(h); e != nullptr && e->present()) out.pfn = e->pfn();
      return out;
    }
    if (h.at_commit_point()) {
      out.kind = h.kind;
      out.pfn = h.frame;
      if (h.kind == FaultKind::MfoeHit) {
        out.mfoe_cycles = params_.hit_cycles();
      } else {
        out.kernel_cycles = sample_kernel_latency();
        if (h.kind == FaultKind::MfoeMiss) out.mfoe_cycles = params_.miss_penalty_cycles();
      }
      out.cycles = out.mfoe_cycles + out.kernel_cycles;
      inflight_[core] = h;
      inflight_end_[core] = now + out.cycles;
      page_owner_[key] = core;
      return out;
    }
    if (!runnable(h)) {
      auto owner = page_owner_.find(key);
      if (owner == page_owner_.end()) throw std::logic_error("PTE locked with no handler in flight");
      out.kind = FaultKind::LockWait;
      out.stall_cycles = std::max<Cycles>(1, inflight_end_[owner->second] - now);
      out.cycles = out.stall_cycles;
      return out;
    }
    step(h);
  }
}

void Mmu::retire(CoreId core) {
  auto& slot = inflight_.at(core);
  if (!slot) return;
  FaultHandler& h = *slot;
  while (!h.done()) {
    if (step(h) == StepStatus::Blocked) throw std::logic_error("in-flight handler blocked while owning its PTE");
  }
  page_owner_.erase({h.space->tgid, h.va.page_number()});
  slot.reset();
}

FaultOutcome Mmu::finish_sync(FaultHandler& h, bool stop_after_mfoe) {
  FaultOutcome out;
  while (!h.done()) {
    if (stop_after_mfoe && h.phase == HandlerPhase::KernelLock) break;
    if (step(h) == StepStatus::Blocked) {
      out.kind = FaultKind::LockWait;
      return out;
    }
  }
  out.kind = h.kind;
  out.pfn = h.frame;
  if (h.kind == FaultKind::MfoeHit) out.mfoe_cycles = params_.hit_cycles();
  if (h.kind == FaultKind::MfoeMiss) out.mfoe_cycles = params_.miss_penalty_cycles();
  if (!stop_after_mfoe && h.frame_from_allocator) out.kernel_cycles = sample_kernel_latency();
  out.cycles = out.mfoe_cycles + out.kernel_cycles;
  return out;
}

FaultOutcome Mmu::mfoe_handle(CoreId core, AddressSpace& space, VirtualAddress va, bool is_write) {
  FaultHandler h = begin(core, space, va, is_write);
  return finish_sync(h, true);
}

FaultOutcome Mmu::kernel_fault(CoreId core, AddressSpace& space, VirtualAddress va, bool is_write) {
  FaultHandler h = begin(core, space, va, is_write);
  to_kernel(h, FaultKind::KernelFault);
  return finish_sync(h, false);
}

}  // namespace mfoesim
