#include "difache/core/cache_node.hpp"

#include "access.hpp"

#include <algorithm>
#include <cstring>

namespace difache::core {

using fabric::FabricOp;
using fabric::OpPurpose;

namespace {

std::uint64_t align_up(std::uint64_t v, std::uint64_t a) { return (v + a - 1) / a * a; }

std::exception_ptr op_error(const FabricOp& op) {
  try {
    fabric::Fabric::throw_if_failed(op);
  } catch (...) {
    return std::current_exception();
  }
  return nullptr;
}

}  // namespace


std::uint64_t CacheNode::region_bytes(const CacheConfig& cfg) {
  std::uint64_t headers = cfg.num_headers ? cfg.num_headers : cfg.index.num_buckets;
  std::uint64_t hb = align_up(64 + cfg.index.region_bytes(), 64);
  std::uint64_t bb = align_up(hb + headers * hdr::kBytes, 4096);
  return bb + cfg.buffer_bytes;
}

CacheNode::CacheNode(std::uint16_t cn, fabric::Fabric& fab, const MnLayout& mn, CacheConfig cfg,
                     FailureReporter* reporter)
    : cn_(cn),
      self_(NodeId::cn(cn)),
      fab_(fab),
      mn_(mn),
      cfg_(cfg),
      reporter_(reporter),
      dir_(fab, mn.directory),
      pool_(cfg.buffer_bytes, cfg.chunk_bytes),
      lat_(cfg.workers, cfg.adaptive.latency_samples, cfg.adaptive.default_latencies) {
  cfg_.index.validate();
  num_headers_ = cfg_.num_headers ? cfg_.num_headers : cfg_.index.num_buckets;
  index_base_ = 64;
  header_base_ = align_up(index_base_ + cfg_.index.region_bytes(), 64);
  buffer_base_ = align_up(header_base_ + num_headers_ * hdr::kBytes, 4096);
  if (buffer_base_ > 0xffffffffULL) throw ConfigError("cache index and headers exceed 4 GiB");
  if (cfg_.max_object_bytes > cfg_.buffer_bytes)
    throw ConfigError("max object size exceeds the buffer pool");
  if (!fab_.has_node(self_)) fab_.add_node(self_, region_bytes(cfg_));
  index_ = std::make_unique<index::HopscotchIndex>(mem(), index_base_, cfg_.index, cn + 1u);
  membership_.live_cns = {cn};
}

void CacheNode::local(Nanos n) {
  if (n > 0) ex().delay(n);
}

Nanos CacheNode::copy_cost(std::size_t bytes) const {
  return cfg_.local.op + static_cast<Nanos>(static_cast<double>(bytes) * cfg_.local.copy_per_byte);
}

std::vector<std::uint16_t> CacheNode::live_others() const {
  std::vector<std::uint16_t> out;
  for (auto c : membership_.live_cns)
    if (c != cn_) out.push_back(c);
  return out;
}

void CacheNode::report(NodeId dst) {
  if (!reporter_ || dst == self_ || !fab_.alive(self_)) return;
  reporter_->report_timeout(self_, dst);
}

// ---------------------------------------------------------------------------
// Header and buffer management

std::optional<std::uint32_t> CacheNode::pop_header(std::uint64_t key) {
  std::uint32_t hoff;
  if (!free_headers_.empty()) {
    hoff = free_headers_.back();
    free_headers_.pop_back();
  } else if (header_bump_ < num_headers_) {
    hoff = static_cast<std::uint32_t>(header_base_ + header_bump_ * hdr::kBytes);
    ++header_bump_;
    header_keys_.push_back(0);
  } else {
    return std::nullopt;
  }
  header_keys_[(hoff - header_base_) / hdr::kBytes] = key;
  return hoff;
}

void CacheNode::release_header(std::uint32_t hoff) {
  drop_buffer(hoff);
  st(hoff + hdr::kState, 0);
  st(hoff + hdr::kCounters, 0);
  st(hoff + hdr::kPolicy, 0);
  st(hoff + hdr::kBuffer, hdr::kNoBuffer);
  header_keys_[(hoff - header_base_) / hdr::kBytes] = 0;
  free_headers_.push_back(hoff);
}

std::optional<std::uint64_t> CacheNode::victim_rank(std::uint32_t hoff) const {
  std::uint64_t s = ld(hoff + hdr::kState);
  if (s & hdr::kSwitching) return std::nullopt;
  std::uint64_t total = hdr::total(ld(hoff + hdr::kCounters));
  return (s & hdr::kModeOn) ? (std::uint64_t{1} << 32) + total : total;
}

bool CacheNode::evict_from(std::uint64_t key) {
  auto v = index_->evict(key, [this](std::uint64_t, std::uint32_t hoff) { return victim_rank(hoff); });
  if (!v) return false;
  release_header(v->value);
  ++stats_.evictions;
  return true;
}

void CacheNode::drop_buffer(std::uint32_t hoff) {
  std::uint64_t b = ld(hoff + hdr::kBuffer);
  std::uint32_t off = hdr::buffer_offset(b);
  if (off != hdr::kNoBuffer) {
    pool_.release(off, hdr::size(ld(hoff + hdr::kPolicy)));
    st(hoff + hdr::kBuffer, hdr::with_buffer(b, hdr::kNoBuffer));
  }
  std::uint64_t s = ld(hoff + hdr::kState);
  if (hdr::tag(s) != 0)
    st(hoff + hdr::kState,
       hdr::make_state(hdr::flags(s) & ~(hdr::kValid | hdr::kFilling), hdr::inval_snap(s),
                       static_cast<std::uint16_t>(hdr::seq(s) + 1), hdr::tag(s)));
  filled_.erase(hoff);
}

std::optional<std::uint32_t> CacheNode::allocate_buffer(std::uint64_t bytes,
                                                        std::uint32_t keep_hoff) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    if (auto off = pool_.allocate(bytes)) return off;
    // Reclaim: sweep a window of headers from the clock hand and drop the
    // buffer of the lowest-ranked one.
    std::optional<std::uint32_t> best;
    std::uint64_t best_rank = 0;
    const std::uint64_t n = header_bump_;
    if (n == 0) return std::nullopt;
    std::uint64_t scanned = 0, seen = 0;
    while (scanned < n && seen < 16) {
      std::uint64_t idx = reclaim_hand_++ % n;
      ++scanned;
      if (header_keys_[idx] == 0) continue;
      auto hoff = static_cast<std::uint32_t>(header_base_ + idx * hdr::kBytes);
      if (hoff == keep_hoff) continue;
      if (hdr::buffer_offset(ld(hoff + hdr::kBuffer)) == hdr::kNoBuffer) continue;
      auto r = victim_rank(hoff);
      if (!r) continue;
      ++seen;
      if (!best || *r < best_rank) {
        best = hoff;
        best_rank = *r;
      }
    }
    if (!best) return std::nullopt;
    drop_buffer(*best);
    ++stats_.buffer_reclaims;
  }
  return std::nullopt;
}

bool CacheNode::range_filled(std::uint32_t hoff, std::uint16_t seq, std::uint32_t rel,
                             std::uint32_t len) const {
  auto it = filled_.find(hoff);
  if (it == filled_.end() || it->second.seq != seq) return false;
  for (auto [a, b] : it->second.ranges)
    if (a <= rel && rel + len <= b) return true;
  return false;
}

namespace {
void add_range(std::vector<std::pair<std::uint32_t, std::uint32_t>>& rs, std::uint32_t a,
               std::uint32_t b) {
  rs.emplace_back(a, b);
  std::sort(rs.begin(), rs.end());
  std::vector<std::pair<std::uint32_t, std::uint32_t>> merged;
  for (auto r : rs) {
    if (!merged.empty() && r.first <= merged.back().second)
      merged.back().second = std::max(merged.back().second, r.second);
    else
      merged.push_back(r);
  }
  rs.swap(merged);
}
}  // namespace

std::optional<std::uint32_t> CacheNode::allocate_header(Worker&, std::uint64_t key,
                                                        std::uint64_t state,
                                                        std::uint64_t policy) {
  auto hoff = pop_header(key);
  if (!hoff && evict_from(key)) hoff = pop_header(key);
  if (!hoff) return std::nullopt;
  st(*hoff + hdr::kCounters, 0);
  st(*hoff + hdr::kPolicy, policy);
  st(*hoff + hdr::kBuffer, hdr::kNoBuffer);
  st(*hoff + hdr::kState, state);
  for (int attempt = 0; attempt < 3; ++attempt) {
    auto r = index_->insert(key, *hoff);
    switch (r.status) {
      case index::HopscotchIndex::InsertStatus::kInserted:
        ++stats_.header_allocs;
        return hoff;
      case index::HopscotchIndex::InsertStatus::kAlreadyPresent:
        release_header(*hoff);
        return r.value;
      case index::HopscotchIndex::InsertStatus::kFull:
        if (!evict_from(key)) attempt = 3;
        break;
    }
  }
  release_header(*hoff);
  return std::nullopt;
}

std::optional<std::uint32_t> CacheNode::locate(Worker& w, std::uint64_t key, std::uint32_t size) {
  if (uncacheable_.count(key)) return std::nullopt;
  local(cfg_.local.op);
  if (auto v = index_->lookup(key)) return v;

  const std::uint32_t tag = hdr::tag_of(key);
  const auto& ad = cfg_.adaptive;
  std::optional<std::uint32_t> h;
  if (!ad.enabled) {
    h = allocate_header(w, key, hdr::make_state(hdr::kModeOn, 0, 0, tag),
                        hdr::make_policy(adaptive::to_fixed(ad.default_threshold),
                                         ad.default_interval, size));
  } else {
    lock_mode(w, key);
    try {
      h = index_->lookup(key);
      if (!h) {
        std::uint64_t state = 0, policy = 0;
        default_mode(w, key, state, policy, size);
        h = allocate_header(w, key, state, policy);
      }
    } catch (const FabricError&) {
      if (fab_.alive(NodeId::mn(key_mn(key))) && fab_.alive(self_)) unlock_mode(w, key);
      throw;
    }
    unlock_mode(w, key);
  }
  if (h && membership_.tracking == owner::TrackingMode::kOwnerSets) owner_set(w, key);
  if (!h) ++stats_.uncacheable;
  return h;
}

std::optional<RemoteAddr> CacheNode::owner_set(Worker& w, std::uint64_t key) {
  if (auto it = owner_sets_.find(key); it != owner_sets_.end()) return it->second;
  if (uncacheable_.count(key)) return std::nullopt;
  auto r = dir_.ensure_owner_sets(w.io, {&key, 1});
  if (!r[0]) {
    uncacheable_.insert(key);
    return std::nullopt;
  }
  owner_sets_[key] = *r[0];
  return r[0];
}

void CacheNode::prefetch_owner_sets(Worker& w, std::span<Access> as) {
  std::vector<std::uint64_t> keys;
  for (auto& a : as)
    if (!a.error && !owner_sets_.count(a.key) && !uncacheable_.count(a.key) &&
        std::find(keys.begin(), keys.end(), a.key) == keys.end())
      keys.push_back(a.key);
  if (keys.empty()) return;
  auto r = dir_.ensure_owner_sets(w.io, keys);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (r[i])
      owner_sets_[keys[i]] = *r[i];
    else
      uncacheable_.insert(keys[i]);
  }
}

// ---------------------------------------------------------------------------
// Remote lookup and invalidation

std::vector<CacheNode::LookupResult> CacheNode::lookup_remote(
    fabric::IoContext& io, std::span<const std::pair<std::uint16_t, std::uint64_t>> q) {
  std::vector<LookupResult> out(q.size(), LookupResult{LookupResult::kNotFound, 0});
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < q.size(); ++i) pending.push_back(i);
  stats_.remote_lookups += q.size();
  std::vector<std::vector<std::byte>> bufs(q.size());
  std::vector<std::uint64_t> first_group(q.size());
  for (std::uint32_t attempt = 0; !pending.empty(); ++attempt) {
    if (attempt > cfg_.lookup_retry_cap)
      throw LivenessError("remote index neighbourhood stayed locked");
    std::vector<FabricOp> ops;
    for (std::size_t i : pending) {
      auto pr = index::HopscotchIndex::probe_range(cfg_.index, index_base_, q[i].second);
      bufs[i].resize(pr.len);
      first_group[i] = pr.first_group;
      ops.push_back(FabricOp::read({NodeId::cn(q[i].first), pr.offset}, bufs[i],
                                  attempt ? OpPurpose::kProbeRetry : OpPurpose::kIndexProbe));
    }
    if (attempt) stats_.lookup_retries += pending.size();
    fab_.batch(io, ops);
    std::vector<std::size_t> next;
    for (std::size_t j = 0; j < pending.size(); ++j) {
      std::size_t i = pending[j];
      if (ops[j].status == FabricStatus::kNodeDead) {
        out[i] = {LookupResult::kDead, 0};
        report(ops[j].addr.node);
        continue;
      }
      fabric::Fabric::throw_if_failed(ops[j]);
      auto r = index::HopscotchIndex::search_snapshot(cfg_.index, q[i].second, bufs[i],
                                                      first_group[i]);
      using SS = index::HopscotchIndex::SnapshotStatus;
      if (r.status == SS::kLocked)
        next.push_back(i);
      else if (r.status == SS::kFound)
        out[i] = {LookupResult::kFound, r.value};
    }
    pending.swap(next);
  }
  return out;
}

std::optional<std::uint32_t> CacheNode::lookup_remote(fabric::IoContext& io, std::uint16_t cn,
                                                      std::uint64_t key) {
  std::pair<std::uint16_t, std::uint64_t> q{cn, key};
  auto r = lookup_remote(io, {&q, 1});
  if (r[0].status == LookupResult::kDead)
    throw FabricError(FabricStatus::kNodeDead, NodeId::cn(cn), "remote lookup: CN dead");
  if (r[0].status == LookupResult::kFound) return r[0].offset;
  return std::nullopt;
}

void CacheNode::invalidate_targets(fabric::IoContext& io,
                                   std::vector<std::pair<std::uint16_t, std::uint64_t>> targets) {
  if (targets.empty() || cfg_.skip_invalidation) return;
  stats_.invalidation_targets += targets.size();
  auto found = lookup_remote(io, targets);
  std::vector<FabricOp> ops;
  for (std::size_t i = 0; i < targets.size(); ++i)
    if (found[i].status == LookupResult::kFound)
      ops.push_back(FabricOp::faa({NodeId::cn(targets[i].first), found[i].offset + hdr::kBuffer},
                                  hdr::kInvalOne, OpPurpose::kInvalidate));
  if (!ops.empty()) {
    fab_.batch(io, ops);
    stats_.invalidation_msgs += ops.size();
    for (auto& op : ops)
      if (op.status == FabricStatus::kNodeDead) report(op.addr.node);
  }
  if (observer_)
    for (auto& [cn, key] : targets) observer_->invalidated(cn_, cn, key);
}

void CacheNode::invalidate_remote(fabric::IoContext& io, std::uint16_t cn, std::uint64_t key) {
  invalidate_targets(io, {{cn, key}});
}

// ---------------------------------------------------------------------------
// Read path

void CacheNode::prepare(Worker& w, Access& a, bool is_read) {
  a.hoff = locate(w, a.key, a.anc_len);
  a.mode_on = a.hoff ? mode_check(w, a, is_read) : false;
}

bool CacheNode::try_hit(Access& a) {
  std::uint32_t h = *a.hoff;
  std::uint64_t s = ld(h + hdr::kState);
  std::uint64_t b = ld(h + hdr::kBuffer);
  if (hdr::tag(s) != a.tag || (s & (hdr::kModeOn | hdr::kSwitching)) != hdr::kModeOn) return false;
  if (!hdr::effectively_valid(s, b) || !membership_.caching_enabled) return false;
  if (hdr::buffer_offset(b) == hdr::kNoBuffer) return false;
  if (!range_filled(h, hdr::seq(s), a.rel, a.len)) return false;
  if (!a.out.empty()) {
    mem().read(buffer_base_ + hdr::buffer_offset(b) + a.rel, a.out);
    if (cfg_.record_hit_stamps) hit_stamps_.push_back(ex().next_stamp());
  }
  return true;
}

CacheNode::Claim CacheNode::claim(Access& a) {
  std::uint32_t h = *a.hoff;
  std::uint64_t s = ld(h + hdr::kState);
  std::uint64_t b = ld(h + hdr::kBuffer);
  if (hdr::tag(s) != a.tag || (s & (hdr::kModeOn | hdr::kSwitching)) != hdr::kModeOn ||
      !membership_.caching_enabled || hdr::size(ld(h + hdr::kPolicy)) != a.anc_len)
    return Claim::kNotCacheable;
  if (hdr::effectively_valid(s, b) && hdr::buffer_offset(b) != hdr::kNoBuffer) {
    a.claim_state = s;
    a.epoch = membership_.epoch;
    return Claim::kPartial;
  }
  if (s & hdr::kFilling) return Claim::kBusy;
  if (hdr::buffer_offset(b) == hdr::kNoBuffer) {
    auto off = allocate_buffer(a.anc_len, h);
    if (!off) return Claim::kNotCacheable;
    b = hdr::with_buffer(b, *off);
    st(h + hdr::kBuffer, b);
    s = ld(h + hdr::kState);
  }
  a.claim_state = hdr::make_state(hdr::kModeOn | hdr::kFilling, static_cast<std::uint16_t>(b >> 32),
                                  static_cast<std::uint16_t>(hdr::seq(s) + 1), a.tag);
  st(h + hdr::kState, a.claim_state);
  a.epoch = membership_.epoch;
  return Claim::kClaimed;
}

void CacheNode::abort_claim(Access& a) {
  if (a.claim != Claim::kClaimed || !a.hoff) return;
  std::uint32_t h = *a.hoff;
  std::uint64_t s = ld(h + hdr::kState);
  if (s == a.claim_state) st(h + hdr::kState, hdr::with_flags(s, hdr::kModeOn));
  a.claim = Claim::kNotCacheable;
}

void CacheNode::publish(Access& a) {
  std::uint32_t h = *a.hoff;
  std::uint64_t s = ld(h + hdr::kState);
  std::uint64_t b = ld(h + hdr::kBuffer);
  std::uint32_t off = hdr::buffer_offset(b);
  bool ok = s == a.claim_state && membership_.epoch == a.epoch && membership_.caching_enabled &&
            off != hdr::kNoBuffer;
  if (a.claim == Claim::kClaimed) {
    if (!ok) {
      abort_claim(a);
      ++stats_.fills_aborted;
      return;
    }
    mem().write(buffer_base_ + off + a.rel, a.out);
    filled_[h] = Filled{hdr::seq(s), {{a.rel, a.rel + a.len}}};
    st(h + hdr::kState, hdr::with_flags(s, hdr::kModeOn | hdr::kValid));
  } else if (a.claim == Claim::kPartial) {
    if (!ok || !hdr::effectively_valid(s, b)) return;
    auto it = filled_.find(h);
    if (it == filled_.end() || it->second.seq != hdr::seq(s)) return;
    mem().write(buffer_base_ + off + a.rel, a.out);
    add_range(it->second.ranges, a.rel, a.rel + a.len);
  }
}

void CacheNode::finish(Worker& w, Access& a) {
  if (a.error) return;
  lat_.record(w.id, a.event, ex().now() - a.start);
  count(a.event);
}

namespace {
template <class Req>
void validate_request(const Req& r, std::size_t len, std::uint32_t max_bytes) {
  if (r.obj.node.kind != NodeKind::kMemory || r.ancestor.node != r.obj.node)
    throw RangeNotContained("object and ancestor must live on the same MN");
  if (r.obj.offset < r.ancestor.offset ||
      r.obj.offset + len > r.ancestor.offset + r.ancestor_len)
    throw RangeNotContained("object range is not inside its ancestor");
  if (r.ancestor_len > max_bytes) throw std::invalid_argument("object larger than the cache limit");
}
}  // namespace

std::vector<AccessResult> CacheNode::read_batch(Worker& w, std::span<const ReadRequest> reqs) {
  std::vector<Access> as(reqs.size());
  const Nanos t0 = ex().now();
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    const ReadRequest& r = reqs[i];
    validate_request(r, r.out.size(), cfg_.max_object_bytes);
    Access& a = as[i];
    a.key = pack_key(r.ancestor);
    a.tag = hdr::tag_of(a.key);
    a.obj = r.obj;
    a.rel = static_cast<std::uint32_t>(r.obj.offset - r.ancestor.offset);
    a.len = static_cast<std::uint32_t>(r.out.size());
    a.anc_len = r.ancestor_len;
    a.out = r.out;
    a.start = t0;
  }

  // Phase 1: local work, hits complete here.
  for (auto& a : as) {
    try {
      prepare(w, a, true);
      if (!a.mode_on || !membership_.caching_enabled) {
        a.event = EventClass::kReadBypass;
        a.fetch = true;
        continue;
      }
      if (try_hit(a)) {
        // Pay for the copy, then take the image again atomically.
        local(copy_cost(a.len));
        if (try_hit(a)) {
          a.event = EventClass::kReadHit;
          continue;
        }
      }
      a.event = EventClass::kReadMiss;
      a.fetch = true;
      a.claim = claim(a);
    } catch (const FabricError& e) {
      a.error = std::current_exception();
      report(e.node());
    }
  }

  // Phase 2: register as owner before the copy can become valid.
  if (membership_.tracking == owner::TrackingMode::kOwnerSets) {
    std::vector<Access*> fills;
    for (auto& a : as)
      if (!a.error && a.claim == Claim::kClaimed) fills.push_back(&a);
    if (!fills.empty()) {
      try {
        std::vector<RemoteAddr> sets;
        for (Access* a : fills) {
          auto set = owner_set(w, a->key);
          if (!set) {
            abort_claim(*a);
            continue;
          }
          sets.push_back(*set);
        }
        dir_.record_owners(w.io, sets, cn_);
      } catch (const FabricError& e) {
        for (Access* a : fills) {
          abort_claim(*a);
          a->error = std::current_exception();
        }
        report(e.node());
      }
    }
  }

  // Phase 3: one fabric batch for every object that needs source data.
  std::vector<FabricOp> ops;
  std::vector<Access*> fetching;
  for (auto& a : as) {
    if (a.error || !a.fetch) continue;
    ops.push_back(FabricOp::read(a.obj, a.out, OpPurpose::kData));
    fetching.push_back(&a);
  }
  if (!ops.empty()) {
    fab_.batch(w.io, ops);
    for (std::size_t j = 0; j < ops.size(); ++j) {
      if (ops[j].status == FabricStatus::kOk) continue;
      fetching[j]->error = op_error(ops[j]);
      abort_claim(*fetching[j]);
      if (ops[j].status == FabricStatus::kNodeDead) report(ops[j].addr.node);
    }
  }

  // Phase 4: publish fills.
  for (auto& a : as) {
    if (a.error || (a.claim != Claim::kClaimed && a.claim != Claim::kPartial)) continue;
    local(copy_cost(a.len));
    publish(a);
  }

  std::vector<AccessResult> out(as.size());
  for (std::size_t i = 0; i < as.size(); ++i) {
    finish(w, as[i]);
    out[i].event = as[i].event;
    if (as[i].error) {
      out[i].error = as[i].error;
      out[i].status = FabricStatus::kNodeDead;
      try {
        std::rethrow_exception(as[i].error);
      } catch (const FabricError& e) {
        out[i].status = e.status();
      } catch (...) {
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Write path

void CacheNode::invalidate_own(std::uint32_t hoff, std::uint32_t tag) {
  if (hdr::tag(ld(hoff + hdr::kState)) != tag) return;
  st(hoff + hdr::kBuffer, ld(hoff + hdr::kBuffer) + hdr::kInvalOne);
}

bool CacheNode::own_update(Access& a) {
  std::uint32_t h = *a.hoff;
  std::uint64_t s = ld(h + hdr::kState);
  std::uint64_t b = ld(h + hdr::kBuffer);
  if (hdr::tag(s) != a.tag) return false;
  if ((s & (hdr::kModeOn | hdr::kSwitching)) != hdr::kModeOn || !membership_.caching_enabled ||
      hdr::size(ld(h + hdr::kPolicy)) != a.anc_len) {
    invalidate_own(h, a.tag);
    return false;
  }
  bool prior = hdr::effectively_valid(s, b);
  if (hdr::buffer_offset(b) == hdr::kNoBuffer) {
    auto off = allocate_buffer(a.anc_len, h);
    if (!off) {
      invalidate_own(h, a.tag);
      return false;
    }
    b = hdr::with_buffer(b, *off);
    st(h + hdr::kBuffer, b);
    s = ld(h + hdr::kState);
  }
  auto nseq = static_cast<std::uint16_t>(hdr::seq(s) + 1);
  mem().write(buffer_base_ + hdr::buffer_offset(b) + a.rel, a.in);
  Filled f;
  f.seq = nseq;
  if (prior)
    if (auto it = filled_.find(h); it != filled_.end() && it->second.seq == hdr::seq(s))
      f.ranges = it->second.ranges;
  add_range(f.ranges, a.rel, a.rel + a.len);
  filled_[h] = std::move(f);
  st(h + hdr::kState, hdr::make_state(hdr::kModeOn | hdr::kValid,
                                      static_cast<std::uint16_t>(b >> 32), nseq, a.tag));
  return true;
}

void CacheNode::wait_not_switching(Worker&, std::uint32_t hoff, std::uint32_t tag) {
  for (std::uint64_t spins = 0;; ++spins) {
    std::uint64_t s = ld(hoff + hdr::kState);
    if (hdr::tag(s) != tag || !(s & hdr::kSwitching)) return;
    if (spins > cfg_.adaptive.spin_bound) throw LivenessError("SwitchStuck");
    ex().delay(std::max<Nanos>(cfg_.adaptive.spin_backoff, 1));
  }
}

std::vector<AccessResult> CacheNode::write_batch(Worker& w, std::span<const WriteRequest> reqs) {
  std::vector<Access> as(reqs.size());
  const Nanos t0 = ex().now();
  for (std::size_t i = 0; i < reqs.size(); ++i) {
    const WriteRequest& r = reqs[i];
    validate_request(r, r.in.size(), cfg_.max_object_bytes);
    Access& a = as[i];
    a.key = pack_key(r.ancestor);
    a.tag = hdr::tag_of(a.key);
    a.obj = r.obj;
    a.rel = static_cast<std::uint32_t>(r.obj.offset - r.ancestor.offset);
    a.len = static_cast<std::uint32_t>(r.in.size());
    a.anc_len = r.ancestor_len;
    a.in = r.in;
    a.start = t0;
  }
  const std::uint64_t epoch0 = membership_.epoch;

  // Phase 1: header + mode check.
  for (auto& a : as) {
    try {
      prepare(w, a, false);
      a.event = a.mode_on ? EventClass::kWriteCached : EventClass::kWriteBypass;
    } catch (const FabricError& e) {
      a.error = std::current_exception();
      report(e.node());
    }
  }

  // Phase 2: flush every object to its MN.
  {
    std::vector<FabricOp> ops;
    std::vector<Access*> flushing;
    for (auto& a : as) {
      if (a.error) continue;
      ops.push_back(FabricOp::write(a.obj, a.in, OpPurpose::kData));
      flushing.push_back(&a);
    }
    if (!ops.empty()) fab_.batch(w.io, ops);
    for (std::size_t j = 0; j < ops.size(); ++j) {
      if (ops[j].status == FabricStatus::kOk) continue;
      flushing[j]->error = op_error(ops[j]);
      if (ops[j].status == FabricStatus::kNodeDead) report(ops[j].addr.node);
    }
  }

  // Phase 3: decide which writes must invalidate. A bypassed write re-checks
  // the mode after its flush: a switch to "on" may have let peers cache the
  // old image in the meantime.
  for (auto& a : as) {
    if (a.error) continue;
    if (!a.hoff) {
      a.invalidate = true;
      continue;
    }
    if (a.mode_on) {
      a.invalidate = true;
      continue;
    }
    wait_not_switching(w, *a.hoff, a.tag);
    std::uint64_t s = ld(*a.hoff + hdr::kState);
    if (hdr::tag(s) != a.tag || (s & hdr::kModeOn)) {
      a.invalidate = true;
      invalidate_own(*a.hoff, a.tag);
    }
  }

  std::vector<std::pair<std::uint16_t, std::uint64_t>> targets;
  const auto others = live_others();
  if (membership_.tracking == owner::TrackingMode::kBroadcast) {
    for (auto& a : as)
      if (!a.error && a.invalidate) {
        a.targets = others;
        if (observer_) observer_->collected(cn_, a.key, a.targets);
      }
  } else {
    prefetch_owner_sets(w, as);
    std::vector<RemoteAddr> sets;
    std::vector<Access*> collecting;
    for (auto& a : as) {
      if (a.error || !a.invalidate) continue;
      auto it = owner_sets_.find(a.key);
      if (it == owner_sets_.end()) continue;  // directory full: nobody caches it
      sets.push_back(it->second);
      collecting.push_back(&a);
    }
    try {
      auto prior = dir_.acquire_all(w.io, sets, cn_);
      for (std::size_t j = 0; j < collecting.size(); ++j) {
        collecting[j]->targets = owner::owners_from_bits(prior[j], cn_, membership_.live_cns);
        if (observer_) observer_->collected(cn_, collecting[j]->key, collecting[j]->targets);
      }
    } catch (const FabricError& e) {
      for (Access* a : collecting) a->error = std::current_exception();
      report(e.node());
    }
  }

  // Phase 4: refresh the writer's own copy.
  for (auto& a : as) {
    if (a.error || !a.hoff || !a.mode_on) continue;
    local(copy_cost(a.len));
    own_update(a);
  }

  // Phase 5: invalidate peers, all probes in one batch and all atomics in one.
  for (auto& a : as)
    if (!a.error)
      for (auto cn : a.targets) targets.emplace_back(cn, a.key);
  invalidate_targets(w.io, std::move(targets));

  // A membership change during the write may have let a CN outside our
  // target list cache the old image; sweep every live CN until stable.
  for (std::uint64_t seen = epoch0; membership_.epoch != seen;) {
    seen = membership_.epoch;
    std::vector<std::pair<std::uint16_t, std::uint64_t>> sweep;
    for (auto& a : as)
      if (!a.error)
        for (auto cn : live_others()) sweep.emplace_back(cn, a.key);
    invalidate_targets(w.io, std::move(sweep));
  }

  std::vector<AccessResult> out(as.size());
  for (std::size_t i = 0; i < as.size(); ++i) {
    finish(w, as[i]);
    out[i].event = as[i].event;
    if (as[i].error) {
      out[i].error = as[i].error;
      out[i].status = FabricStatus::kNodeDead;
      try {
        std::rethrow_exception(as[i].error);
      } catch (const FabricError& e) {
        out[i].status = e.status();
      } catch (...) {
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Single-object API

EventClass CacheNode::read(Worker& w, RemoteAddr obj, std::span<std::byte> out) {
  ReadRequest r{obj, out, obj, static_cast<std::uint32_t>(out.size())};
  auto res = read_batch(w, {&r, 1});
  if (res[0].error) std::rethrow_exception(res[0].error);
  return res[0].event;
}

EventClass CacheNode::write(Worker& w, RemoteAddr obj, std::span<const std::byte> in) {
  WriteRequest r{obj, in, obj, static_cast<std::uint32_t>(in.size())};
  auto res = write_batch(w, {&r, 1});
  if (res[0].error) std::rethrow_exception(res[0].error);
  return res[0].event;
}

EventClass CacheNode::read_nested(Worker& w, RemoteAddr obj, RemoteAddr ancestor,
                                  std::uint32_t ancestor_len, std::span<std::byte> out) {
  ReadRequest r{obj, out, ancestor, ancestor_len};
  auto res = read_batch(w, {&r, 1});
  if (res[0].error) std::rethrow_exception(res[0].error);
  return res[0].event;
}

EventClass CacheNode::write_nested(Worker& w, RemoteAddr obj, RemoteAddr ancestor,
                                   std::uint32_t ancestor_len, std::span<const std::byte> in) {
  WriteRequest r{obj, in, ancestor, ancestor_len};
  auto res = write_batch(w, {&r, 1});
  if (res[0].error) std::rethrow_exception(res[0].error);
  return res[0].event;
}

std::uint64_t CacheNode::atomic_cas(Worker& w, RemoteAddr word, std::uint64_t expected,
                                    std::uint64_t desired) {
  std::uint64_t key = pack_key(word);
  if (!cfg_.adaptive.enabled) {
    auto r = fab_.cas(w.io, word, expected, desired, OpPurpose::kOther);
    if (r == expected) invalidate_everywhere(w, key);
    return r;
  }
  if (auto h = locate(w, key, 8)) {
    std::uint64_t s = ld(*h + hdr::kState);
    if (s & (hdr::kModeOn | hdr::kSwitching)) switch_mode(w, key, false);
  }
  return fab_.cas(w.io, word, expected, desired, OpPurpose::kOther);
}

std::uint64_t CacheNode::atomic_faa(Worker& w, RemoteAddr word, std::uint64_t addend) {
  std::uint64_t key = pack_key(word);
  if (!cfg_.adaptive.enabled) {
    auto r = fab_.faa(w.io, word, addend, OpPurpose::kOther);
    invalidate_everywhere(w, key);
    return r;
  }
  if (auto h = locate(w, key, 8)) {
    std::uint64_t s = ld(*h + hdr::kState);
    if (s & (hdr::kModeOn | hdr::kSwitching)) switch_mode(w, key, false);
  }
  return fab_.faa(w.io, word, addend, OpPurpose::kOther);
}

// Without adaptive caching an object cannot be switched off, so an atomic is
// followed by the same invalidation a write would send.
void CacheNode::invalidate_everywhere(Worker& w, std::uint64_t key) {
  const std::uint32_t tag = hdr::tag_of(key);
  if (auto h = index_->lookup(key)) invalidate_own(*h, tag);
  std::vector<std::uint16_t> targets;
  if (membership_.tracking == owner::TrackingMode::kBroadcast) {
    targets = live_others();
  } else if (auto set = owner_set(w, key)) {
    targets = owner::owners_from_bits(dir_.acquire(w.io, *set, cn_), cn_, membership_.live_cns);
  }
  std::vector<std::pair<std::uint16_t, std::uint64_t>> q;
  for (auto c : targets) q.emplace_back(c, key);
  invalidate_targets(w.io, std::move(q));
}

// ---------------------------------------------------------------------------
// Coordinator hooks and introspection

void CacheNode::apply_membership(const Membership& m) { membership_ = m; }

void CacheNode::on_mn_failure(std::uint16_t mn) {
  const auto& ad = cfg_.adaptive;
  for (std::uint64_t idx = 0; idx < header_bump_; ++idx) {
    std::uint64_t key = header_keys_[idx];
    if (key == 0 || key_mn(key) != mn) continue;
    auto hoff = static_cast<std::uint32_t>(header_base_ + idx * hdr::kBytes);
    drop_buffer(hoff);
    std::uint64_t s = ld(hoff + hdr::kState);
    std::uint64_t p = ld(hoff + hdr::kPolicy);
    std::uint64_t b = ld(hoff + hdr::kBuffer);
    st(hoff + hdr::kCounters, 0);
    st(hoff + hdr::kPolicy, hdr::make_policy(adaptive::to_fixed(ad.default_threshold),
                                             ad.default_interval, hdr::size(p)));
    st(hoff + hdr::kBuffer, b + hdr::kInvalOne);
    st(hoff + hdr::kState, hdr::make_state(ad.enabled ? 0 : hdr::kModeOn, hdr::inval_snap(s),
                                           static_cast<std::uint16_t>(hdr::seq(s) + 1),
                                           hdr::tag(s)));
  }
  for (auto it = owner_sets_.begin(); it != owner_sets_.end();)
    it = key_mn(it->first) == mn ? owner_sets_.erase(it) : std::next(it);
  for (auto it = uncacheable_.begin(); it != uncacheable_.end();)
    it = key_mn(*it) == mn ? uncacheable_.erase(it) : std::next(it);
}

void CacheNode::wipe_cache() {
  for (std::uint64_t idx = 0; idx < header_bump_; ++idx) {
    if (header_keys_[idx] == 0) continue;
    auto hoff = static_cast<std::uint32_t>(header_base_ + idx * hdr::kBytes);
    drop_buffer(hoff);
    st(hoff + hdr::kBuffer, ld(hoff + hdr::kBuffer) + hdr::kInvalOne);
  }
  owner_sets_.clear();
  uncacheable_.clear();
}

void CacheNode::reset_after_recovery() {
  index_ = std::make_unique<index::HopscotchIndex>(mem(), index_base_, cfg_.index, cn_ + 1u);
  pool_.reset();
  header_bump_ = 0;
  free_headers_.clear();
  header_keys_.clear();
  reclaim_hand_ = 0;
  filled_.clear();
  owner_sets_.clear();
  uncacheable_.clear();
}

std::vector<std::uint64_t> CacheNode::switching_keys() const {
  std::vector<std::uint64_t> out;
  for (std::uint64_t idx = 0; idx < header_bump_; ++idx) {
    if (header_keys_[idx] == 0) continue;
    auto hoff = static_cast<std::uint32_t>(header_base_ + idx * hdr::kBytes);
    if (ld(hoff + hdr::kState) & hdr::kSwitching) out.push_back(header_keys_[idx]);
  }
  return out;
}

void CacheNode::force_mode_off(std::uint64_t key) {
  auto h = index_->lookup(key);
  if (!h) return;
  std::uint64_t s = ld(*h + hdr::kState);
  if (hdr::tag(s) != hdr::tag_of(key)) return;
  st(*h + hdr::kState, hdr::make_state(0, hdr::inval_snap(s),
                                       static_cast<std::uint16_t>(hdr::seq(s) + 1), hdr::tag(s)));
  filled_.erase(*h);
}

std::optional<HeaderView> CacheNode::header(std::uint64_t key) const {
  auto h = index_->lookup(key);
  if (!h) return std::nullopt;
  HeaderView v;
  v.offset = *h;
  v.state = ld(*h + hdr::kState);
  v.counters = ld(*h + hdr::kCounters);
  v.policy = ld(*h + hdr::kPolicy);
  v.buffer = ld(*h + hdr::kBuffer);
  return v;
}

}  // namespace difache::core
