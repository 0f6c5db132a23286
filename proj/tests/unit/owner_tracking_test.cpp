#include <gtest/gtest.h>

#include <vector>

#include "difache/owner/owner_tracking.hpp"

using namespace difache;
using namespace difache::owner;

TEST(OwnerBits, AliasingModulo64) {
  EXPECT_EQ(owner_bit(3), owner_bit(67));
  std::vector<std::uint16_t> live{0, 3, 5, 67};
  // cn 67 registered; cn 3 is reported too (false positive), writer excluded.
  auto t = owners_from_bits(owner_bit(67), 0, live);
  EXPECT_EQ(t, (std::vector<std::uint16_t>{3, 67}));
  auto w = owners_from_bits(owner_bit(3) | owner_bit(5), 67, live);
  EXPECT_EQ(w, (std::vector<std::uint16_t>{3, 5}));
}

TEST(TrackingPolicy, AutoSwitchesAbove32) {
  EXPECT_EQ(resolve(TrackingPolicy::kAuto, 32), TrackingMode::kBroadcast);
  EXPECT_EQ(resolve(TrackingPolicy::kAuto, 33), TrackingMode::kOwnerSets);
  EXPECT_EQ(resolve(TrackingPolicy::kBroadcast, 100), TrackingMode::kBroadcast);
  EXPECT_EQ(resolve(TrackingPolicy::kOwnerSets, 2), TrackingMode::kOwnerSets);
  EXPECT_EQ(parse_policy("ownerset"), TrackingPolicy::kOwnerSets);
  EXPECT_THROW(parse_policy("bogus"), ConfigError);
}

namespace {

DirectoryLayout small_layout(std::uint64_t slots = 1024, std::uint32_t probes = 64) {
  DirectoryLayout l;
  l.slots = slots;
  l.max_probes = probes;
  return l;
}

struct Rig {
  sim::SimExecutor ex;
  fabric::Fabric fab{ex, {}};
  DirectoryLayout layout;
  OwnerDirectory dir;
  explicit Rig(DirectoryLayout l = small_layout()) : layout(l), dir(fab, l) {
    fab.add_node(NodeId::mn(0), layout.region_end());
    fab.add_node(NodeId::cn(0), 4096);
  }
  fabric::IoContext io{NodeId::cn(0)};
  template <class F>
  void in_task(F f) {
    ex.spawn("t", f);
    ex.run();
  }
};

}  // namespace

TEST(OwnerDirectory, RecordAcquireCollect) {
  Rig r;
  const std::uint64_t key = pack_key({NodeId::mn(0), 64});
  std::vector<std::uint16_t> live{0, 1, 2, 3};
  r.in_task([&] {
    auto set = r.dir.ensure_owner_set(r.io, key);
    EXPECT_EQ(r.dir.ensure_owner_set(r.io, key), set);
    r.dir.record_owner(r.io, set, 1);
    r.dir.record_owner(r.io, set, 2);
    EXPECT_EQ(r.dir.peek(r.fab.memory(NodeId::mn(0)), key), owner_bit(1) | owner_bit(2));
    auto owners = r.dir.acquire_and_collect_owners(r.io, set, 3, live);
    EXPECT_EQ(owners, (std::vector<std::uint16_t>{1, 2}));
    EXPECT_EQ(r.dir.peek(r.fab.memory(NodeId::mn(0)), key), owner_bit(3));
  });
}

TEST(OwnerDirectory, BroadcastTargetsEveryoneElse) {
  Rig r;
  std::vector<std::uint16_t> live{0, 1, 2};
  r.in_task([&] {
    auto t = r.dir.owners_for_invalidation(r.io, 77 + 64, 1, TrackingMode::kBroadcast, live);
    EXPECT_EQ(t, (std::vector<std::uint16_t>{0, 2}));
  });
  EXPECT_EQ(r.fab.stats().total_ops(), 0u);
}

TEST(OwnerDirectory, BatchLeavesFullEntriesEmpty) {
  Rig r(small_layout(2, 2));
  std::vector<std::uint64_t> keys{100, 200, 300};
  r.in_task([&] {
    auto sets = r.dir.ensure_owner_sets(r.io, keys);
    int filled = 0;
    for (auto& s : sets) filled += s.has_value();
    EXPECT_EQ(filled, 2);
    EXPECT_THROW(r.dir.ensure_owner_set(r.io, 400), DirectoryFull);
  });
}

TEST(OwnerDirectory, ClearDropsEntries) {
  Rig r;
  const std::uint64_t key = 64;
  r.in_task([&] { r.dir.record_owner(r.io, r.dir.ensure_owner_set(r.io, key), 1); });
  OwnerDirectory::clear(r.fab.memory(NodeId::mn(0)), r.layout);
  EXPECT_FALSE(r.dir.peek(r.fab.memory(NodeId::mn(0)), key));
}
