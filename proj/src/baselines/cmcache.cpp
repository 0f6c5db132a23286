#include "difache/baselines/cmcache.hpp"

#include <algorithm>
#include <cstring>

namespace difache::baselines {

using fabric::FabricOp;
using fabric::OpPurpose;

CmManager::CmManager(fabric::Fabric& fab, CmConfig cfg)
    : fab_(fab), cfg_(cfg), workers_(fab.executor().make_semaphore(cfg.manager_workers)) {
  if (!fab_.has_node(self_)) fab_.add_node(self_, 4096);
  io_.src = self_;
}

void CmManager::attach(CmCacheNode* cn) { nodes_[cn->cn()] = cn; }

CmManager::Lane& CmManager::lane(std::uint64_t key) {
  auto [it, fresh] = lanes_.try_emplace(key);
  if (fresh) it->second.mutex = fab_.executor().make_semaphore(1);
  return it->second;
}

void CmManager::enter(Lane& l) {
  auto& ex = fab_.executor();
  Nanos t0 = ex.now();
  workers_->acquire();
  l.mutex->acquire();
  stats_.queue_wait += ex.now() - t0;
  ex.delay(cfg_.service_time);
}

void CmManager::leave(Lane& l) {
  l.mutex->release();
  workers_->release();
}

void CmManager::serve_miss(std::uint16_t cn, std::uint32_t slot, RemoteAddr obj,
                           std::span<std::byte> out) {
  ++stats_.rpcs;
  Lane& l = lane(pack_key(obj));
  enter(l);
  try {
    l.owners[cn] = slot;
    ++stats_.source_reads;
    fab_.read(io_, obj, out, OpPurpose::kData);
  } catch (...) {
    leave(l);
    throw;
  }
  leave(l);
}

void CmManager::serve_write(std::uint16_t cn, std::uint32_t slot, std::uint64_t token,
                            RemoteAddr obj, std::span<const std::byte> in) {
  ++stats_.rpcs;
  Lane& l = lane(pack_key(obj));
  enter(l);
  try {
    static const std::array<std::byte, 8> zero{};
    std::vector<FabricOp> ops;
    for (auto [owner, s] : l.owners) {
      if (owner == cn) continue;
      auto it = nodes_.find(owner);
      if (it == nodes_.end()) continue;
      ops.push_back(FabricOp::write({NodeId::cn(owner), it->second->state_offset(s)}, zero,
                                    OpPurpose::kInvalidate));
    }
    stats_.invalidations += ops.size();
    // The writer's own slot gets the write's token: a miss from the same CN
    // that read the old image can no longer install it.
    std::array<std::byte, 8> pending;
    const std::uint64_t word = token << 1;
    std::memcpy(pending.data(), &word, 8);
    if (auto it = nodes_.find(cn); it != nodes_.end())
      ops.push_back(FabricOp::write({NodeId::cn(cn), it->second->state_offset(slot)}, pending,
                                    OpPurpose::kInvalidate));
    // Invalidations and the source update leave together; the reply waits
    // for all of them.
    ops.push_back(FabricOp::write(obj, in, OpPurpose::kData));
    ++stats_.source_writes;
    fab_.batch(io_, ops);
    fabric::Fabric::throw_if_failed(ops.back());
    l.owners.clear();
    l.owners[cn] = slot;
  } catch (...) {
    leave(l);
    throw;
  }
  leave(l);
}

void CmManager::forget_mn(std::uint16_t mn) {
  for (auto it = lanes_.begin(); it != lanes_.end(); ++it)
    if (key_mn(it->first) == mn) it->second.owners.clear();
}

void CmManager::forget_cn(std::uint16_t cn) {
  for (auto& [_, l] : lanes_) l.owners.erase(cn);
}

CmCacheNode::CmCacheNode(std::uint16_t cn, fabric::Fabric& fab, CmManager& mgr,
                         FailureReporter* reporter)
    : cn_(cn),
      self_(NodeId::cn(cn)),
      fab_(fab),
      mgr_(mgr),
      reporter_(reporter),
      buffer_base_((64 + 8ull * mgr.config().entries + 4095) / 4096 * 4096),
      pool_(mgr.config().buffer_bytes, mgr.config().chunk_bytes) {
  if (!fab_.has_node(self_)) fab_.add_node(self_, buffer_base_ + mgr.config().buffer_bytes);
  mgr_.attach(this);
}

void CmCacheNode::local(Nanos n) {
  if (n > 0) fab_.executor().delay(n);
}

Nanos CmCacheNode::copy_cost(std::size_t n) const {
  return mgr_.config().local_op +
         static_cast<Nanos>(static_cast<double>(n) * mgr_.config().copy_per_byte);
}

template <class F>
auto CmCacheNode::guarded(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const FabricError& e) {
    if (reporter_ && e.status() == FabricStatus::kNodeDead && fab_.alive(self_) &&
        e.node() != self_)
      reporter_->report_timeout(self_, e.node());
    throw;
  }
}

void CmCacheNode::drop(std::uint64_t key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return;
  Entry& e = it->second;
  fab_.memory(self_).store(state_offset(e.slot), 0);
  if (e.buf != 0xffffffffu) pool_.release(e.buf, e.len);
  free_slots_.push_back(e.slot);
  entries_.erase(it);
}

void CmCacheNode::evict_one(std::uint64_t keep) {
  while (!clock_.empty()) {
    hand_ %= clock_.size();
    std::uint64_t k = clock_[hand_];
    if (k == keep || !entries_.count(k)) {
      if (k != keep) {
        clock_[hand_] = clock_.back();
        clock_.pop_back();
      } else {
        ++hand_;
        if (clock_.size() == 1) return;
      }
      continue;
    }
    clock_[hand_] = clock_.back();
    clock_.pop_back();
    drop(k);
    return;
  }
}

CmCacheNode::Entry& CmCacheNode::entry(std::uint64_t key, std::uint32_t len) {
  auto it = entries_.find(key);
  if (it != entries_.end() && it->second.len == len) return it->second;
  if (it != entries_.end()) drop(key);
  while (free_slots_.empty() && slot_bump_ >= mgr_.config().entries && !entries_.empty())
    evict_one(key);
  std::uint32_t slot;
  if (!free_slots_.empty()) {
    slot = free_slots_.back();
    free_slots_.pop_back();
  } else {
    slot = slot_bump_++;
  }
  Entry e{slot, 0xffffffffu, len};
  for (int i = 0; i < 64; ++i) {
    if (auto b = pool_.allocate(len)) {
      e.buf = *b;
      break;
    }
    if (entries_.empty()) break;
    evict_one(key);
  }
  clock_.push_back(key);
  return entries_[key] = e;
}

void CmCacheNode::install(Entry& e, std::uint64_t token, std::span<const std::byte> data) {
  auto& mem = fab_.memory(self_);
  if (e.buf == 0xffffffffu) return;
  if (mem.load(state_offset(e.slot)) != (token << 1)) return;
  mem.write(buffer_base_ + e.buf, data);
  mem.store(state_offset(e.slot), (token << 1) | kValid);
}

EventClass CmCacheNode::read(Worker& w, RemoteAddr obj, std::span<std::byte> out) {
  const std::uint64_t key = pack_key(obj);
  const auto len = static_cast<std::uint32_t>(out.size());
  if (!caching_) {
    guarded([&] { fab_.read(w.io, obj, out, OpPurpose::kData); });
    ++events_[static_cast<std::size_t>(EventClass::kReadBypass)];
    return EventClass::kReadBypass;
  }
  local(mgr_.config().local_op);
  auto& mem = fab_.memory(self_);
  if (auto it = entries_.find(key); it != entries_.end() && it->second.len == len) {
    Entry& e = it->second;
    if (e.buf != 0xffffffffu && (mem.load(state_offset(e.slot)) & kValid)) {
      local(copy_cost(len));
      auto jt = entries_.find(key);
      if (jt != entries_.end() && jt->second.buf != 0xffffffffu &&
          (mem.load(state_offset(jt->second.slot)) & kValid)) {
        mem.read(buffer_base_ + jt->second.buf, out);
        ++events_[static_cast<std::size_t>(EventClass::kReadHit)];
        return EventClass::kReadHit;
      }
    }
  }
  Entry& e = entry(key, len);
  const std::uint32_t slot = e.slot;
  const std::uint64_t token = next_token_++;
  mem.store(state_offset(slot), token << 1);
  guarded([&] {
    fab_.message(w.io, NodeId::manager(0), mgr_.config().rpc_bytes, OpPurpose::kRpc);
    mgr_.serve_miss(cn_, slot, obj, out);
    fabric::IoContext reply{NodeId::manager(0), w.id};
    fab_.message(reply, self_, mgr_.config().rpc_bytes + len, OpPurpose::kRpc);
  });
  local(copy_cost(len));
  if (auto it = entries_.find(key); it != entries_.end() && it->second.slot == slot)
    install(it->second, token, out);
  ++events_[static_cast<std::size_t>(EventClass::kReadMiss)];
  return EventClass::kReadMiss;
}

EventClass CmCacheNode::write(Worker& w, RemoteAddr obj, std::span<const std::byte> in) {
  const std::uint64_t key = pack_key(obj);
  const auto len = static_cast<std::uint32_t>(in.size());
  local(mgr_.config().local_op);
  auto& mem = fab_.memory(self_);
  Entry& e = entry(key, len);
  const std::uint32_t slot = e.slot;
  const std::uint64_t token = next_token_++;
  mem.store(state_offset(slot), token << 1);
  guarded([&] {
    fab_.message(w.io, NodeId::manager(0), mgr_.config().rpc_bytes + len, OpPurpose::kRpc);
    mgr_.serve_write(cn_, slot, token, obj, in);
    fabric::IoContext reply{NodeId::manager(0), w.id};
    fab_.message(reply, self_, mgr_.config().rpc_bytes, OpPurpose::kRpc);
  });
  if (caching_) {
    local(copy_cost(len));
    if (auto it = entries_.find(key); it != entries_.end() && it->second.slot == slot)
      install(it->second, token, in);
  }
  ++events_[static_cast<std::size_t>(EventClass::kWriteCached)];
  return EventClass::kWriteCached;
}

std::uint64_t CmCacheNode::atomic_cas(Worker& w, RemoteAddr word, std::uint64_t expected,
                                      std::uint64_t desired) {
  return guarded([&] { return fab_.cas(w.io, word, expected, desired, OpPurpose::kOther); });
}

std::uint64_t CmCacheNode::atomic_faa(Worker& w, RemoteAddr word, std::uint64_t addend) {
  return guarded([&] { return fab_.faa(w.io, word, addend, OpPurpose::kOther); });
}

void CmCacheNode::on_mn_failure(std::uint16_t mn) {
  std::vector<std::uint64_t> keys;
  for (auto& [k, _] : entries_)
    if (key_mn(k) == mn) keys.push_back(k);
  for (auto k : keys) drop(k);
  mgr_.forget_mn(mn);
}

void CmCacheNode::wipe_cache() {
  std::vector<std::uint64_t> keys;
  for (auto& [k, _] : entries_) keys.push_back(k);
  for (auto k : keys) drop(k);
}

void CmCacheNode::reset_after_recovery() {
  entries_.clear();
  free_slots_.clear();
  slot_bump_ = 0;
  clock_.clear();
  hand_ = 0;
  pool_.reset();
  mgr_.forget_cn(cn_);
}

}  // namespace difache::baselines
