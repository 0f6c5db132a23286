#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "difache/bench/history.hpp"
#include "difache/bench/versioned.hpp"
#include "difache/core/cache_node.hpp"
#include "difache/fabric/fabric.hpp"
#include "difache/sim/executor.hpp"

namespace difache::check {

inline core::CacheConfig small_cache(bool adaptive = true) {
  core::CacheConfig c;
  c.index.num_buckets = 64;
  c.buffer_bytes = 64 * 1024;
  c.max_object_bytes = 4096;
  c.workers = 2;
  c.adaptive.enabled = adaptive;
  return c;
}

// A few CNs and one MN wired together without a coordinator.
struct World {
  sim::Executor& ex;
  fabric::Fabric fab;
  MnLayout layout;
  std::map<std::uint16_t, std::unique_ptr<core::CacheNode>> cns;
  owner::OwnerDirectory dir;
  Membership membership;

  World(sim::Executor& e, std::vector<std::uint16_t> ids, owner::TrackingMode mode,
        core::CacheConfig cfg = small_cache(), fabric::FabricConfig fc = {})
      : ex(e), fab(e, fc), dir(fab, layout.directory) {
    fab.add_node(NodeId::mn(0), layout.region_size);
    for (auto id : ids) cns[id] = std::make_unique<core::CacheNode>(id, fab, layout, cfg);
    membership.epoch = 1;
    membership.caching_enabled = true;
    membership.live_cns = ids;
    std::sort(membership.live_cns.begin(), membership.live_cns.end());
    membership.tracking = mode;
    for (auto& [_, n] : cns) n->apply_membership(membership);
  }

  core::CacheNode& cn(std::uint16_t id) { return *cns.at(id); }
  Worker worker(std::uint16_t cn, int id = 0) {
    Worker w;
    w.id = id;
    w.io.src = NodeId::cn(cn);
    w.io.actor = cn * 16 + id;
    return w;
  }
  std::uint64_t owner_bits(std::uint64_t key) {
    return dir.peek(fab.memory(NodeId::mn(0)), key).value_or(0);
  }
};

// Tracks which CNs a writer has collected but not yet invalidated.
struct PendingTargets : core::CoherenceObserver {
  std::map<std::uint16_t, std::multiset<std::uint16_t>> pending;
  std::uint64_t collected_targets = 0;
  void collected(std::uint16_t writer, std::uint64_t, const std::vector<std::uint16_t>& t) override {
    for (auto c : t) pending[writer].insert(c);
    collected_targets += t.size();
  }
  void invalidated(std::uint16_t writer, std::uint16_t target, std::uint64_t) override {
    auto& s = pending[writer];
    if (auto it = s.find(target); it != s.end()) s.erase(it);
  }
  bool is_pending(std::uint16_t cn) const {
    for (auto& [_, s] : pending)
      if (s.count(cn)) return true;
    return false;
  }
};

// The owner-set soundness check: a CN holding a valid copy has its bit set,
// unless an in-flight write already collected it for invalidation.
inline std::string owner_violation(World& w, std::uint64_t key, const PendingTargets* pending) {
  const std::uint64_t bits = w.owner_bits(key);
  for (auto& [id, n] : w.cns) {
    auto h = n->header(key);
    if (!h || !h->valid()) continue;
    if (bits & owner::owner_bit(id)) continue;
    if (pending && pending->is_pending(id)) continue;
    std::ostringstream os;
    os << "cn " << id << " holds a valid copy but its owner bit is clear (bits=" << bits << ")";
    return os.str();
  }
  return {};
}

// Issues versioned reads and writes on one object and records the history.
struct ObjectClient {
  World& w;
  std::uint16_t cn;
  Worker worker;
  RemoteAddr obj;
  std::uint32_t size;
  bench::History& history;
  std::uint64_t* next_version;
  int id;

  std::uint64_t read() {
    std::vector<std::byte> buf(size);
    for (;;) {
      auto start = w.ex.next_stamp();
      w.cn(cn).read(worker, obj, buf);
      auto end = w.ex.next_stamp();
      if (auto v = bench::decode_object(obj.offset, buf)) {
        history.add({obj.offset, false, *v, start, end, id});
        return *v;
      }
    }
  }
  void write() {
    std::vector<std::byte> buf(size);
    const std::uint64_t v = ++*next_version;
    bench::encode_object(obj.offset, v, buf);
    auto start = w.ex.next_stamp();
    w.cn(cn).write(worker, obj, buf);
    auto end = w.ex.next_stamp();
    history.add({obj.offset, true, v, start, end, id});
  }
};

}  // namespace difache::check
