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

#include "mfoesim/kernel_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mfoesim {

// ---------------------------------------------------------------------------
// BookkeepingLedger

void BookkeepingLedger::record(Tgid tgid, VirtualAddress va, Pfn pfn) {
  if (rmap_.count(raw(pfn)) != 0) {
    throw std::logic_error("frame " + std::to_string(raw(pfn)) + " accounted twice");
  }
  anon_vma_.insert(tgid);
  ++mm_[tgid];
  rmap_.emplace(raw(pfn), Mapping{tgid, va});
  lru_.push_back(pfn);
  on_lru_.insert(raw(pfn));
  ++cgroup_charge_;
  ++records_;
}

std::uint64_t BookkeepingLedger::mm_counter(Tgid tgid) const {
  auto it = mm_.find(tgid);
  return it == mm_.end() ? 0 : it->second;
}

std::optional<BookkeepingLedger::Mapping> BookkeepingLedger::rmap(Pfn pfn) const {
  auto it = rmap_.find(raw(pfn));
  if (it == rmap_.end()) return std::nullopt;
  return it->second;
}

BookkeepingLedger::Canonical BookkeepingLedger::canonical() const {
  Canonical c;
  c.mappings.reserve(rmap_.size());
  for (const auto& [pfn, m] : rmap_) c.mappings.push_back(m);
  std::sort(c.mappings.begin(), c.mappings.end());
  c.mm_counters = mm_;
  c.cgroup_charge = cgroup_charge_;
  c.lru_size = lru_.size();
  return c;
}

std::string_view to_string(SeError e) {
  switch (e) {
    case SeError::NoVma: return "no_vma";
    case SeError::NotVmMfoe: return "not_vm_mfoe";
    case SeError::NotMfoeable: return "not_mfoeable";
    case SeError::TgidMismatch: return "tgid_mismatch";
    case SeError::AlreadyMapped: return "already_mapped";
    case SeError::LeafBusy: return "leaf_busy";
    case SeError::TableEmpty: return "table_empty";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// KernelModel

KernelModel::KernelModel(const ModelParameters& params, KernelConfig config, std::uint64_t seed)
    : params_(params),
      config_(config),
      frames_(config.total_frames, config.numa_nodes),
      mmu_(params, MmuConfig{config.cores, config.tlb_entries}, *this, seed),
      refresh_cycles_(std::llround(config.refresh_interval_ms * 1e-3 * params.clock_hz)),
      se_latency_(LatencyDistribution::lognormal(params.sw_emulation_mean_ns, params.sw_emulation_p95_ns)),
      se_rng_(seed ^ 0x9E3779B97F4A7C15ULL) {
  if (refresh_cycles_ <= 0) throw std::invalid_argument("refresh interval must be positive");
  if (!(config.quota_threshold > 0.0)) throw std::invalid_argument("quota threshold must be positive");
  if (!(config.prefault_throughput_pages_per_s > 0.0)) throw std::invalid_argument("pre-fault throughput must be positive");
  if (config_.quota_frames == 0) config_.quota_frames = config.total_frames;
  stats_.first_visits.assign(config.cores, 0);
}

Tgid KernelModel::create_process() {
  if (next_tgid_ == 0) throw std::runtime_error("TGID space exhausted");
  const Tgid id = next_tgid_++;
  auto p = std::make_unique<ProcessModel>(id);
  p->quota = config_.quota_frames;
  procs_.emplace(id, std::move(p));
  return id;
}

ProcessModel& KernelModel::process(Tgid tgid) {
  auto it = procs_.find(tgid);
  if (it == procs_.end()) throw std::out_of_range("no process with TGID " + std::to_string(tgid));
  return *it->second;
}

const ProcessModel& KernelModel::process(Tgid tgid) const {
  auto it = procs_.find(tgid);
  if (it == procs_.end()) throw std::out_of_range("no process with TGID " + std::to_string(tgid));
  return *it->second;
}

NodeId KernelModel::node_of_core(CoreId core) const noexcept {
  return static_cast<NodeId>(std::uint64_t{core} * frames_.nodes() / config_.cores);
}

Pfn KernelModel::table_pfn(CoreId core) const {
  if (tables_.empty()) throw std::logic_error("tables not constructed");
  // Table pages live in memory reserved above the allocator's pool.
  return Pfn{config_.total_frames + std::uint64_t{core} * tables_.front()->pages_needed()};
}

PreallocTable* KernelModel::table_at(Pfn pfn) {
  for (CoreId c = 0; c < tables_.size(); ++c) {
    if (table_pfn(c) == pfn) return tables_[c].get();
  }
  return nullptr;
}

void KernelModel::construct_tables(std::uint32_t num_entries) {
  tables_.clear();
  for (CoreId c = 0; c < config_.cores; ++c) tables_.push_back(std::make_unique<PreallocTable>(num_entries));
}

void KernelModel::mfoe_enable(Tgid tgid, std::uint32_t preallocation_size, Cycles now) {
  if (preallocation_size < 1 || preallocation_size > PreallocTable::kMaxEntries) {
    throw std::invalid_argument("preallocation size must be in [1, 65535]");
  }
  ProcessModel& p = process(tgid);
  if (p.mfoe_enabled) return;
  const bool first = tables_.empty();
  if (first) construct_tables(preallocation_size);
  p.mfoe_enabled = true;
  ++active_;
  if (!refill_) {
    refill_ = true;
    for (CoreId c = 0; c < config_.cores; ++c) {
      mmu_.cr9(c) = Cr9Register::make(table_pfn(c), static_cast<std::uint16_t>(tables_[c]->num_entries()),
                                      config_.hardware_mfoe);
    }
    start_fill(now);
    if (first) tick_epoch_ = fill_done_;
  }
}

void KernelModel::start_fill(Cycles now) {
  filling_ = true;
  fill_origin_ = now;
  fill_pages_done_ = 0;
  fill_core_ = 0;
  const std::int64_t pages = std::int64_t{config_.cores} * tables_.front()->capacity();
  fill_done_ = now + cycles_for_pages(pages, params_.init_throughput_pages_per_s, params_.clock_hz);
}

void KernelModel::advance_fill(Cycles now) {
  if (!filling_) return;
  const std::int64_t ready = pages_completed(now - fill_origin_, params_.init_throughput_pages_per_s, params_.clock_hz);
  while (fill_core_ < config_.cores) {
    PreallocTable& t = *tables_[fill_core_];
    if (t.head_state() != EntryState::Empty) {
      ++fill_core_;
      continue;
    }
    if (fill_pages_done_ >= ready) return;
    Pfn pfn;
    try {
      pfn = frames_.allocate(node_of_core(fill_core_), ZeroingCharge::Background);
    } catch (const OutOfMemory&) {
      filling_ = false;
      return;
    }
    t.produce(pfn);
    ++fill_pages_done_;
    ++stats_.fill_pages;
  }
  filling_ = false;
}

void KernelModel::mfoe_disable(Tgid tgid) {
  ProcessModel& p = process(tgid);
  if (!p.mfoe_enabled) return;
  p.mfoe_enabled = false;
  std::erase_if(prefault_, [tgid](const PrefaultTask& t) { return t.tgid == tgid; });
  if (--active_ != 0) return;
  refill_ = false;
  filling_ = false;
  for (CoreId c = 0; c < config_.cores; ++c) {
    mmu_.cr9(c).set_enabled(false);
    for (Pfn f : tables_[c]->release_valid()) {
      frames_.release(f);
      ++stats_.frames_released;
    }
  }
}

Vma KernelModel::region_create(Tgid tgid, std::uint64_t pages, bool writable, Cycles now) {
  ProcessModel& p = process(tgid);
  Vma vma;
  vma.start = VirtualAddress{p.next_region};
  vma.end = VirtualAddress{p.next_region + pages * kPageSize};
  vma.writable = writable;
  vma.vm_mfoe = p.mfoe_enabled;
  p.next_region = vma.end.value() + kPageSize;  // guard page
  p.space.vmas.push_back(vma);
  if (vma.vm_mfoe && pages > 0) prefault_.push_back({tgid, vma, now, 0});
  return vma;
}

void KernelModel::stamp(const PrefaultTask& task, std::uint64_t page) {
  const VirtualAddress va{task.vma.start.value() + page * kPageSize};
  PageTableEntry& leaf = process(task.tgid).space.page_table.construct_path(va);
  // A page the kernel already mapped, or is mapping, keeps its entry.
  if (leaf.present() || leaf.locked()) return;
  leaf = PageTableEntry::mfoeable_for(task.tgid, task.vma.writable);
}

void KernelModel::prefault_construct(Tgid tgid, const Vma& vma) {
  if (!vma.vm_mfoe) throw std::invalid_argument("region does not carry VM_MFOE");
  const PrefaultTask task{tgid, vma, 0, 0};
  for (std::uint64_t i = 0; i < vma.pages(); ++i) stamp(task, i);
}

void KernelModel::advance_prefault(Cycles now) {
  for (PrefaultTask& task : prefault_) {
    const auto ready = static_cast<std::uint64_t>(
        pages_completed(now - task.start, config_.prefault_throughput_pages_per_s, params_.clock_hz));
    const std::uint64_t target = std::min(ready, task.vma.pages());
    for (; task.done < target; ++task.done) {
      stamp(task, task.done);
      ++stats_.prefault_pages;
    }
  }
  std::erase_if(prefault_, [](const PrefaultTask& t) { return t.done == t.vma.pages(); });
}

std::optional<Cycles> KernelModel::next_event_time() const {
  if (tables_.empty()) return std::nullopt;
  return tick_epoch_ + static_cast<Cycles>(stats_.ticks + 1) * refresh_cycles_;
}

void KernelModel::catch_up(Cycles now) {
  for (auto t = next_event_time(); t && *t <= now; t = next_event_time()) {
    advance_fill(*t);
    advance_prefault(*t);
    run_tick();
  }
  advance_fill(now);
  advance_prefault(now);
}

void KernelModel::postfault_tick(Cycles now) {
  if (tables_.empty()) return;
  advance_fill(now);
  advance_prefault(now);
  run_tick();
}

void KernelModel::clear_pending_mfoeable() {
  for (auto& [tgid, p] : procs_) {
    if (!p->clear_mfoeable_pending) continue;
    for (const Vma& vma : p->space.vmas) {
      for (std::uint64_t i = 0; i < vma.pages(); ++i) {
        PageTableEntry* leaf = p->space.page_table.find_leaf(VirtualAddress{vma.start.value() + i * kPageSize});
        if (leaf != nullptr && !leaf->present() && !leaf->locked()) leaf->set_mfoeable(false);
      }
    }
    p->clear_mfoeable_pending = false;
  }
}

void KernelModel::run_tick() {
  const std::uint64_t j = ++stats_.ticks;
  clear_pending_mfoeable();

  const double rate = params_.background_throughput_pages_per_s;
  std::int64_t budget = pages_completed(static_cast<Cycles>(j) * refresh_cycles_, rate, params_.clock_hz) -
                        pages_completed(static_cast<Cycles>(j - 1) * refresh_cycles_, rate, params_.clock_hz);

  const std::uint32_t cores = config_.cores;
  const CoreId first = static_cast<CoreId>((j - 1) % cores);
  ++stats_.first_visits[first];
  bool out_of_memory = false;

  for (std::uint32_t i = 0; i < cores && budget > 0; ++i) {
    const CoreId core = (first + i) % cores;
    PreallocTable& t = *tables_[core];
    if (!t.try_cleanup_lock()) continue;
    if (refill_ && !out_of_memory) {
      while (budget > 0) {
        const EntryState head = t.head_state();
        if (head == EntryState::Valid) break;
        if (head == EntryState::Used) {
          for (const PreallocRecord& r : t.harvest(1)) {
            record(r);
            ++stats_.harvested;
          }
        }
        --budget;
        try {
          t.produce(frames_.allocate(node_of_core(core), ZeroingCharge::Background));
          ++stats_.refilled;
        } catch (const OutOfMemory&) {
          out_of_memory = true;
          break;
        }
      }
    } else {
      for (const PreallocRecord& r : t.take_used(static_cast<std::size_t>(budget))) {
        record(r);
        ++stats_.harvested;
        --budget;
      }
    }
    t.release_cleanup_lock();
  }

  for (auto& [tgid, p] : procs_) {
    if (p->alive && p->mfoe_enabled) resource_check(tgid);
  }
}

std::size_t KernelModel::error_cleanup(Tgid tgid) {
  std::size_t n = 0;
  for (auto& t : tables_) {
    if (!t->try_cleanup_lock()) throw std::logic_error("cleanup lock held outside a refresh tick");
    for (const PreallocRecord& r : t->take_used_matching(tgid)) {
      record(r);
      ++n;
    }
    t->release_cleanup_lock();
  }
  stats_.cleanup_records += n;
  return n;
}

void KernelModel::resource_check(Tgid tgid) {
  ProcessModel& p = process(tgid);
  if (!p.mfoe_enabled) return;
  const double usage = static_cast<double>(ledger_.mm_counter(tgid));
  if (usage > config_.quota_threshold * static_cast<double>(p.quota)) {
    mfoe_disable(tgid);
    p.clear_mfoeable_pending = true;
    ++stats_.pressure_disables;
  }
}

SeOutcome KernelModel::mfoe_se(Tgid tgid, CoreId core, VirtualAddress va, bool is_write) {
  (void)is_write;  // permission faults are left to the kernel fallback
  ProcessModel& p = process(tgid);
  va = va.page_base();
  SeOutcome out;
  const Vma* vma = p.space.find_vma(va);
  PageTableEntry* leaf = p.space.page_table.find_leaf(va);
  if (vma == nullptr) {
    out.error = SeError::NoVma;
  } else if (!vma->vm_mfoe) {
    out.error = SeError::NotVmMfoe;
  } else if (leaf != nullptr && leaf->present()) {
    out.error = SeError::AlreadyMapped;
  } else if (leaf == nullptr || !leaf->mfoeable()) {
    out.error = SeError::NotMfoeable;
  } else if (leaf->tgid() != tgid) {
    out.error = SeError::TgidMismatch;
  } else if (leaf->locked()) {
    out.error = SeError::LeafBusy;
  }
  if (out.error) return out;

  std::optional<Pfn> pfn;
  if (!tables_.empty()) pfn = tables_.at(core)->consume(va, tgid);
  if (!pfn) {
    out.error = SeError::TableEmpty;
    return out;
  }
  PageTableEntry installed = PageTableEntry::mapped(*pfn, vma->writable);
  installed.set_mfoeable(true);
  *leaf = installed;
  out.pfn = pfn;
  out.cycles = std::max<Cycles>(1, params_.ns_to_cycles(se_latency_.sample(se_rng_)));
  return out;
}

void KernelModel::terminate(Tgid tgid) {
  ProcessModel& p = process(tgid);
  if (!p.alive) return;
  error_cleanup(tgid);
  mfoe_disable(tgid);
  p.clear_mfoeable_pending = false;
  p.alive = false;
}

FrameCensus KernelModel::frame_census() const {
  FrameCensus c;
  c.total = frames_.total_frames();
  c.free = frames_.free_frames();
  for (const auto& t : tables_) c.valid_in_tables += t->count(EntryState::Valid);
  for (const auto& [tgid, p] : procs_) c.mapped += p->space.page_table.count_present();
  return c;
}

Pfn KernelModel::allocate_inline(CoreId core) { return frames_.allocate(node_of_core(core), ZeroingCharge::FaultingCore); }

void KernelModel::account_inline(Tgid tgid, VirtualAddress va, Pfn pfn) { ledger_.record(tgid, va, pfn); }

}  // namespace mfoesim
