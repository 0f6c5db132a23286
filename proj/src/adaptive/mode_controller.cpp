#include "difache/adaptive/mode_controller.hpp"

#include <algorithm>
#include <array>
#include <cstring>

#include "difache/core/cache_node.hpp"
#include "../core/access.hpp"

namespace difache::adaptive {

std::uint64_t counter_addend(bool is_read, bool hit) {
  std::uint64_t a = core::hdr::kTotalLane;
  if (is_read) a += core::hdr::kReadLane;
  if (is_read && hit) a += core::hdr::kHitLane;
  return a;
}

Evaluation evaluate(bool mode_on, std::uint64_t counters, std::uint16_t threshold,
                    const Latencies& lat) {
  const std::uint32_t reads = core::hdr::reads(counters);
  const std::uint32_t total = core::hdr::total(counters);
  Evaluation ev;
  ev.threshold = threshold;
  if (total == 0) return ev;
  if (mode_on) {
    if (reads > 0) {
      double h = static_cast<double>(core::hdr::hits(counters)) / reads;
      ev.threshold = to_fixed(break_even_threshold(h, lat));
    }
    if (!ratio_at_least(reads, total, ev.threshold)) ev.decision = Decision::kSwitchOff;
  } else if (ratio_at_least(reads, total, threshold)) {
    ev.decision = Decision::kSwitchOn;
  }
  return ev;
}

}  // namespace difache::adaptive

namespace difache::core {

using fabric::FabricOp;
using fabric::OpPurpose;
using adaptive::Decision;
using adaptive::counter_addend;
using adaptive::to_fixed;

namespace {

struct RemoteHeader {
  std::uint16_t cn;
  std::uint32_t hoff;
  std::array<std::byte, hdr::kBytes> raw{};
  std::uint64_t word(std::uint64_t off) const {
    std::uint64_t v;
    std::memcpy(&v, raw.data() + off, 8);
    return v;
  }
};

}  // namespace

bool CacheNode::mode_check(Worker& w, Access& a, bool is_read) {
  const std::uint32_t h = *a.hoff;
  const auto& ad = cfg_.adaptive;
  local(cfg_.local.op);
  std::uint64_t s = 0;
  for (std::uint64_t spins = 0;; ++spins) {
    s = ld(h + hdr::kState);
    if (hdr::tag(s) != a.tag) return false;
    if (!(s & hdr::kSwitching)) break;
    if (spins > ad.spin_bound) throw LivenessError("SwitchStuck");
    ex().delay(std::max<Nanos>(ad.spin_backoff, 1));
  }
  const bool on = s & hdr::kModeOn;
  if (!ad.enabled) return on;

  const bool hit = on && hdr::effectively_valid(s, ld(h + hdr::kBuffer));
  std::uint64_t c = ld(h + hdr::kCounters) + counter_addend(is_read, hit);
  st(h + hdr::kCounters, c);
  std::uint64_t p = ld(h + hdr::kPolicy);
  if (hdr::total(c) < hdr::interval(p)) return on;

  st(h + hdr::kCounters, 0);
  auto ev = evaluate(on, c, hdr::threshold(p), lat_.aggregate());
  if (on) st(h + hdr::kPolicy, hdr::make_policy(ev.threshold, hdr::interval(p), hdr::size(p)));
  if (ev.decision != Decision::kKeep) switch_mode(w, a.key, ev.decision == Decision::kSwitchOn);
  return on;
}

void CacheNode::lock_mode(Worker& w, std::uint64_t key) {
  RemoteAddr lock = mn_.mode_lock(key);
  const std::uint64_t me = cn_ + 1u;
  for (std::uint64_t attempt = 0;; ++attempt) {
    if (fab_.cas(w.io, lock, 0, me, OpPurpose::kModeLock) == 0) return;
    if (attempt >= cfg_.lock_retry_cap) throw LivenessError("mode lock not acquired");
    ex().delay(std::max<Nanos>(cfg_.lock_backoff, 1));
  }
}

void CacheNode::unlock_mode(Worker& w, std::uint64_t key) {
  fab_.cas(w.io, mn_.mode_lock(key), cn_ + 1u, 0, OpPurpose::kModeLock);
}

void CacheNode::default_mode(Worker& w, std::uint64_t key, std::uint64_t& state,
                             std::uint64_t& policy, std::uint32_t size) {
  const auto& ad = cfg_.adaptive;
  const std::uint32_t tag = hdr::tag_of(key);
  const auto others = live_others();
  for (std::uint64_t spins = 0;; ++spins) {
    std::vector<std::pair<std::uint16_t, std::uint64_t>> q;
    for (auto c : others) q.emplace_back(c, key);
    auto found = lookup_remote(w.io, q);
    std::vector<RemoteHeader> hs;
    for (std::size_t i = 0; i < q.size(); ++i)
      if (found[i].status == LookupResult::kFound) hs.push_back({q[i].first, found[i].offset});
    std::vector<FabricOp> ops;
    for (auto& r : hs)
      ops.push_back(FabricOp::read({NodeId::cn(r.cn), r.hoff}, r.raw, OpPurpose::kHeaderState));
    if (!ops.empty()) fab_.batch(w.io, ops);

    bool busy = false;
    const RemoteHeader* adopt = nullptr;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      if (ops[i].status == FabricStatus::kNodeDead) {
        report(ops[i].addr.node);
        continue;
      }
      fabric::Fabric::throw_if_failed(ops[i]);
      std::uint64_t s = hs[i].word(hdr::kState);
      if (hdr::tag(s) != tag) continue;
      if (s & hdr::kSwitching) {
        busy = true;
        break;
      }
      if (!adopt) adopt = &hs[i];
    }
    if (!busy) {
      if (adopt) {
        std::uint64_t s = adopt->word(hdr::kState);
        std::uint64_t p = adopt->word(hdr::kPolicy);
        state = hdr::make_state(s & hdr::kModeOn, 0, 0, tag);
        policy = hdr::make_policy(hdr::threshold(p), hdr::interval(p), size);
      } else {
        state = hdr::make_state(0, 0, 0, tag);
        policy = hdr::make_policy(to_fixed(ad.default_threshold), ad.default_interval, size);
      }
      return;
    }
    if (spins > ad.spin_bound) throw LivenessError("SwitchStuck");
    ex().delay(std::max<Nanos>(ad.spin_backoff, 1));
  }
}

SwitchResult CacheNode::switch_mode(Worker& w, std::uint64_t key, bool on) {
  auto h = index_->lookup(key);
  if (!h) return SwitchResult::kAborted;
  lock_mode(w, key);
  SwitchResult r;
  try {
    r = switch_locked(w, key, *h, on);
  } catch (const FabricError&) {
    if (fab_.alive(NodeId::mn(key_mn(key))) && fab_.alive(self_)) unlock_mode(w, key);
    throw;
  }
  unlock_mode(w, key);
  return r;
}

SwitchResult CacheNode::switch_locked(Worker& w, std::uint64_t key, std::uint32_t hoff, bool on) {
  const std::uint32_t tag = hdr::tag_of(key);
  std::uint64_t own = ld(hoff + hdr::kState);
  if (hdr::tag(own) != tag) return SwitchResult::kAborted;
  if (static_cast<bool>(own & hdr::kModeOn) == on) {
    ++stats_.already_switched;
    return SwitchResult::kAlreadySwitched;
  }

  // Find the object's header on every other live CN.
  const auto others = live_others();
  std::vector<std::pair<std::uint16_t, std::uint64_t>> q;
  for (auto c : others) q.emplace_back(c, key);
  auto found = lookup_remote(w.io, q);
  std::vector<RemoteHeader> hs;
  for (std::size_t i = 0; i < q.size(); ++i)
    if (found[i].status == LookupResult::kFound) hs.push_back({q[i].first, found[i].offset});
  {
    std::vector<FabricOp> ops;
    for (auto& r : hs)
      ops.push_back(FabricOp::read({NodeId::cn(r.cn), r.hoff}, r.raw, OpPurpose::kHeaderState));
    if (!ops.empty()) fab_.batch(w.io, ops);
    std::vector<RemoteHeader> live;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      if (ops[i].status == FabricStatus::kNodeDead) {
        report(ops[i].addr.node);
        continue;
      }
      fabric::Fabric::throw_if_failed(ops[i]);
      if (hdr::tag(hs[i].word(hdr::kState)) == tag) live.push_back(hs[i]);
    }
    hs.swap(live);
  }

  // Raise the switching flag everywhere (CAS loops in lock step), own last.
  std::vector<std::uint64_t> seen(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) seen[i] = hs[i].word(hdr::kState);
  auto cas_all = [&](auto next_of) {
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < hs.size(); ++i) pending.push_back(i);
    while (!pending.empty()) {
      std::vector<FabricOp> ops;
      for (std::size_t i : pending)
        ops.push_back(FabricOp::cas({NodeId::cn(hs[i].cn), hs[i].hoff + hdr::kState}, seen[i],
                                    next_of(seen[i]), OpPurpose::kHeaderState));
      fab_.batch(w.io, ops);
      std::vector<std::size_t> retry;
      for (std::size_t j = 0; j < pending.size(); ++j) {
        std::size_t i = pending[j];
        if (ops[j].status == FabricStatus::kNodeDead) {
          report(ops[j].addr.node);
          continue;
        }
        fabric::Fabric::throw_if_failed(ops[j]);
        if (ops[j].result == seen[i]) {
          seen[i] = next_of(seen[i]);
          continue;
        }
        seen[i] = ops[j].result;
        // A header that was evicted and reused no longer belongs to us.
        if (hdr::tag(seen[i]) == tag) retry.push_back(i);
      }
      pending.swap(retry);
    }
  };
  cas_all([](std::uint64_t s) { return s | hdr::kSwitching; });
  own = ld(hoff + hdr::kState);
  st(hoff + hdr::kState, own | hdr::kSwitching);

  // Publish the new mode, the shared threshold and the promoted interval.
  const std::uint64_t own_policy = ld(hoff + hdr::kPolicy);
  const std::uint16_t th = hdr::threshold(own_policy);
  const std::uint16_t iv = cfg_.adaptive.promoted_interval;
  const std::uint64_t mode_bit = on ? hdr::kModeOn : 0;
  auto final_state = [&](std::uint64_t s) {
    return hdr::make_state(mode_bit, hdr::inval_snap(s), static_cast<std::uint16_t>(hdr::seq(s) + 1),
                           hdr::tag(s));
  };
  if (!hs.empty()) {
    std::vector<FabricOp> ops;
    std::vector<std::uint64_t> pol(hs.size());
    std::vector<std::array<std::byte, 8>> bytes(hs.size());
    for (std::size_t i = 0; i < hs.size(); ++i) {
      pol[i] = hdr::make_policy(th, iv, hdr::size(hs[i].word(hdr::kPolicy)));
      std::memcpy(bytes[i].data(), &pol[i], 8);
      ops.push_back(FabricOp::write({NodeId::cn(hs[i].cn), hs[i].hoff + hdr::kPolicy}, bytes[i],
                                    OpPurpose::kHeaderState));
    }
    fab_.batch(w.io, ops);
    for (auto& op : ops)
      if (op.status == FabricStatus::kNodeDead) report(op.addr.node);
    cas_all(final_state);
  }
  st(hoff + hdr::kPolicy, hdr::make_policy(th, iv, hdr::size(own_policy)));
  st(hoff + hdr::kCounters, 0);
  own = ld(hoff + hdr::kState);
  st(hoff + hdr::kState, final_state(own));
  filled_.erase(hoff);
  ++stats_.switches;
  return SwitchResult::kSwitched;
}

}  // namespace difache::core
