#include "difache/coord/coordinator.hpp"

#include <algorithm>

namespace difache::coord {

Coordinator::Coordinator(sim::Executor& ex, fabric::Fabric& fab, MnLayout layout,
                         CoordinatorConfig cfg)
    : ex_(ex), fab_(fab), layout_(layout), cfg_(cfg), serial_(ex.make_semaphore(1)) {}

void Coordinator::add_engine(std::uint16_t cn, Engine* e) {
  engines_[cn] = e;
  live_.insert(cn);
}

void Coordinator::add_mn(std::uint16_t mn) { mns_.push_back(mn); }

void Coordinator::start() {
  membership_.live_cns.assign(live_.begin(), live_.end());
  membership_.tracking = owner::resolve(cfg_.tracking, live_.size(), cfg_.tracking_threshold);
  membership_.caching_enabled = true;
  publish();
}

void Coordinator::publish() {
  for (auto& [cn, e] : engines_)
    if (live_.count(cn)) e->apply_membership(membership_);
}

bool Coordinator::inside_fence(std::uint64_t stamp) const {
  for (const auto& f : fences_)
    if (stamp > f.start_stamp && (f.end_stamp == 0 || stamp < f.end_stamp)) return true;
  return false;
}

void Coordinator::scale(const std::function<void()>& change) {
  const bool tasked = ex_.in_task();
  if (tasked) serial_->acquire();
  FenceWindow f;
  ++membership_.epoch;
  membership_.caching_enabled = false;
  f.start = ex_.now();
  f.start_stamp = ex_.next_stamp();
  fences_.push_back(f);
  const std::size_t slot = fences_.size() - 1;
  publish();

  if (tasked && cfg_.fence_duration > 0) ex_.delay(cfg_.fence_duration);

  change();
  membership_.live_cns.assign(live_.begin(), live_.end());
  auto mode = owner::resolve(cfg_.tracking, live_.size(), cfg_.tracking_threshold);
  if (mode != membership_.tracking) {
    // Every cached copy and every owner set goes: copies made under the old
    // tracking mode may be missing from the new owner sets.
    ++tracking_changes_;
    for (auto& [cn, e] : engines_)
      if (live_.count(cn)) e->wipe_cache();
    for (auto mn : mns_)
      if (fab_.alive(NodeId::mn(mn)))
        owner::OwnerDirectory::clear(fab_.memory(NodeId::mn(mn)), layout_.directory);
    membership_.tracking = mode;
  }

  ++membership_.epoch;
  membership_.caching_enabled = true;
  fences_[slot].end = ex_.now();
  fences_[slot].end_stamp = ex_.next_stamp();
  publish();
  if (tasked) serial_->release();
}

void Coordinator::scale_add(std::uint16_t cn) {
  scale([&] { live_.insert(cn); });
}

void Coordinator::scale_remove(std::uint16_t cn) {
  scale([&] { live_.erase(cn); });
}

void Coordinator::release_mode_locks(std::uint16_t cn) {
  const std::uint64_t owner = cn + 1u;
  for (auto mn : mns_) {
    if (!fab_.alive(NodeId::mn(mn))) continue;
    auto& mem = fab_.memory(NodeId::mn(mn));
    for (std::uint32_t i = 0; i < layout_.mode_locks; ++i) {
      std::uint64_t off = layout_.mode_lock_base + 8ull * i;
      if (mem.load(off) == owner) mem.store(off, 0);
    }
  }
}

void Coordinator::settle_switches() {
  std::set<std::uint64_t> keys;
  for (auto& [cn, e] : engines_)
    if (live_.count(cn))
      for (auto k : e->switching_keys()) keys.insert(k);
  for (auto k : keys)
    for (auto& [cn, e] : engines_)
      if (live_.count(cn)) e->force_mode_off(k);
}

void Coordinator::report_timeout(NodeId, NodeId dst) {
  if (dead_.count(dst)) return;
  if (dst.kind == NodeKind::kManager) return;
  // A timeout that lands right after a recovery belongs to an op issued
  // while the node was still down.
  if (auto it = recovered_at_.find(dst);
      it != recovered_at_.end() && ex_.now() < it->second + fab_.config().timeout)
    return;
  dead_.insert(dst);
  if (fab_.alive(dst)) fab_.inject_failure(dst);
  if (dst.kind == NodeKind::kCompute) {
    release_mode_locks(dst.id);
    settle_switches();
    for (auto& l : listeners_) l(dst, NodeEvent::kDead);
    scale_remove(dst.id);
  } else {
    for (auto& [cn, e] : engines_)
      if (live_.count(cn)) e->on_mn_failure(dst.id);
    ++membership_.epoch;
    publish();
    for (auto& l : listeners_) l(dst, NodeEvent::kDead);
  }
}

void Coordinator::recover_mn(std::uint16_t mn) {
  NodeId n = NodeId::mn(mn);
  if (!fab_.alive(n)) fab_.recover(n);
  dead_.erase(n);
  recovered_at_[n] = ex_.now();
  for (auto& l : listeners_) l(n, NodeEvent::kRecovered);
  for (auto& [cn, e] : engines_)
    if (live_.count(cn)) e->on_mn_failure(mn);
  ++membership_.epoch;
  publish();
}

void Coordinator::recover_cn(std::uint16_t cn) {
  NodeId n = NodeId::cn(cn);
  if (!fab_.alive(n)) fab_.recover(n);
  dead_.erase(n);
  recovered_at_[n] = ex_.now();
  if (auto it = engines_.find(cn); it != engines_.end()) it->second->reset_after_recovery();
  for (auto& l : listeners_) l(n, NodeEvent::kRecovered);
  scale_add(cn);
}

}  // namespace difache::coord
