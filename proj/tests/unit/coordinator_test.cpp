#include <gtest/gtest.h>

#include "difache/baselines/nocache.hpp"
#include "difache/coord/coordinator.hpp"

using namespace difache;

namespace {

// Records every membership it is handed.
class Probe final : public Engine {
 public:
  explicit Probe(std::uint16_t cn) : self_(NodeId::cn(cn)) {}
  NodeId node() const override { return self_; }
  EventClass read(Worker&, RemoteAddr, std::span<std::byte>) override { return EventClass::kReadBypass; }
  EventClass write(Worker&, RemoteAddr, std::span<const std::byte>) override {
    return EventClass::kWriteBypass;
  }
  std::uint64_t atomic_cas(Worker&, RemoteAddr, std::uint64_t, std::uint64_t) override { return 0; }
  std::uint64_t atomic_faa(Worker&, RemoteAddr, std::uint64_t) override { return 0; }
  void apply_membership(const Membership& m) override { seen.push_back(m); }
  void wipe_cache() override { ++wipes; }
  void on_mn_failure(std::uint16_t) override { ++mn_failures; }

  std::vector<Membership> seen;
  int wipes = 0;
  int mn_failures = 0;

 private:
  NodeId self_;
};

struct Rig {
  sim::SimExecutor ex;
  fabric::Fabric fab{ex, {}};
  MnLayout layout;
  std::unique_ptr<coord::Coordinator> co;
  std::vector<std::unique_ptr<Probe>> probes;

  Rig(int cns, owner::TrackingPolicy policy) {
    fab.add_node(NodeId::mn(0), layout.region_size);
    coord::CoordinatorConfig cfg;
    cfg.tracking = policy;
    co = std::make_unique<coord::Coordinator>(ex, fab, layout, cfg);
    co->add_mn(0);
    for (int c = 0; c < cns; ++c) add(static_cast<std::uint16_t>(c));
    co->start();
  }
  Probe& add(std::uint16_t cn) {
    probes.push_back(std::make_unique<Probe>(cn));
    fab.add_node(NodeId::cn(cn), 4096);
    co->add_engine(cn, probes.back().get());
    return *probes.back();
  }
  template <class F>
  void in_task(F f) {
    ex.spawn("t", f);
    ex.run();
  }
};

}  // namespace

TEST(Coordinator, StartPublishesWithoutFence) {
  Rig r(3, owner::TrackingPolicy::kAuto);
  EXPECT_TRUE(r.co->fences().empty());
  ASSERT_EQ(r.probes[0]->seen.size(), 1u);
  EXPECT_EQ(r.probes[0]->seen[0].live_cns, (std::vector<std::uint16_t>{0, 1, 2}));
  EXPECT_TRUE(r.probes[0]->seen[0].caching_enabled);
}

TEST(Coordinator, ScaleRemoveRunsAFence) {
  Rig r(3, owner::TrackingPolicy::kBroadcast);
  r.in_task([&] { r.co->scale_remove(2); });
  ASSERT_EQ(r.co->fences().size(), 1u);
  const auto& f = r.co->fences()[0];
  EXPECT_EQ(f.end - f.start, 20000);
  EXPECT_GT(f.end_stamp, f.start_stamp);
  EXPECT_FALSE(r.co->inside_fence(f.start_stamp));
  EXPECT_FALSE(r.co->inside_fence(f.end_stamp));
  auto& seen = r.probes[0]->seen;
  ASSERT_EQ(seen.size(), 3u);
  EXPECT_FALSE(seen[1].caching_enabled);
  EXPECT_TRUE(seen[2].caching_enabled);
  EXPECT_EQ(seen[2].live_cns, (std::vector<std::uint16_t>{0, 1}));
  EXPECT_GT(seen[2].epoch, seen[1].epoch);
}

TEST(Coordinator, AutoTrackingFlipsAt33AndWipes) {
  Rig r(32, owner::TrackingPolicy::kAuto);
  EXPECT_EQ(r.co->membership().tracking, owner::TrackingMode::kBroadcast);
  r.add(32);
  r.in_task([&] { r.co->scale_add(32); });
  EXPECT_EQ(r.co->membership().tracking, owner::TrackingMode::kOwnerSets);
  EXPECT_EQ(r.co->tracking_changes(), 1u);
  EXPECT_EQ(r.probes[0]->wipes, 1);
  r.in_task([&] { r.co->scale_remove(5); });
  EXPECT_EQ(r.co->membership().tracking, owner::TrackingMode::kBroadcast);
  EXPECT_EQ(r.co->tracking_changes(), 2u);
}

TEST(Coordinator, TimeoutReportsAreIdempotent) {
  Rig r(3, owner::TrackingPolicy::kBroadcast);
  r.in_task([&] {
    r.co->report_timeout(NodeId::cn(0), NodeId::cn(1));
    r.co->report_timeout(NodeId::cn(2), NodeId::cn(1));
  });
  EXPECT_TRUE(r.co->is_dead(NodeId::cn(1)));
  EXPECT_FALSE(r.fab.alive(NodeId::cn(1)));
  EXPECT_EQ(r.co->fences().size(), 1u);
  EXPECT_EQ(r.co->membership().live_cns, (std::vector<std::uint16_t>{0, 2}));
}

TEST(Coordinator, MnFailureAndRecovery) {
  Rig r(2, owner::TrackingPolicy::kBroadcast);
  std::vector<std::pair<NodeId, coord::NodeEvent>> events;
  r.co->add_listener([&](NodeId n, coord::NodeEvent e) { events.emplace_back(n, e); });
  r.fab.memory(NodeId::mn(0)).store(64, 42);
  r.in_task([&] {
    r.co->report_timeout(NodeId::cn(0), NodeId::mn(0));
    r.co->recover_mn(0);
  });
  EXPECT_FALSE(r.co->is_dead(NodeId::mn(0)));
  EXPECT_EQ(r.probes[0]->mn_failures, 2);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].second, coord::NodeEvent::kDead);
  EXPECT_EQ(events[1].second, coord::NodeEvent::kRecovered);
  // Recovery brings the MN back empty.
  EXPECT_EQ(r.fab.memory(NodeId::mn(0)).load(64), 0u);
}

TEST(Coordinator, DeadSwitcherLocksAreReleased) {
  Rig r(2, owner::TrackingPolicy::kBroadcast);
  auto lock = r.layout.mode_lock(pack_key({NodeId::mn(0), 64}));
  r.fab.memory(NodeId::mn(0)).store(lock.offset, 2);  // held by cn 1
  r.in_task([&] { r.co->report_timeout(NodeId::cn(0), NodeId::cn(1)); });
  EXPECT_EQ(r.fab.memory(NodeId::mn(0)).load(lock.offset), 0u);
}

TEST(Coordinator, LateTimeoutAfterRecoveryIsIgnored) {
  Rig r(2, owner::TrackingPolicy::kBroadcast);
  r.in_task([&] {
    r.co->report_timeout(NodeId::cn(0), NodeId::mn(0));
    r.co->recover_mn(0);
    r.ex.delay(r.fab.config().timeout / 2);
    r.co->report_timeout(NodeId::cn(1), NodeId::mn(0));
  });
  EXPECT_FALSE(r.co->is_dead(NodeId::mn(0)));
  EXPECT_TRUE(r.fab.alive(NodeId::mn(0)));
  r.in_task([&] {
    r.ex.delay(r.fab.config().timeout);
    r.co->report_timeout(NodeId::cn(1), NodeId::mn(0));
  });
  EXPECT_TRUE(r.co->is_dead(NodeId::mn(0)));
}
