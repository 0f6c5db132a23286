#include <gtest/gtest.h>

#include <cstring>

#include "difache/baselines/cmcache.hpp"
#include "difache/baselines/nocache.hpp"
#include "difache/bench/versioned.hpp"

using namespace difache;
using namespace difache::baselines;

namespace {

const RemoteAddr kObj{NodeId::mn(0), kFirstObjectOffset};

struct CmRig {
  sim::SimExecutor ex;
  fabric::Fabric fab{ex, {}};
  CmConfig cfg;
  std::unique_ptr<CmManager> mgr;
  std::vector<std::unique_ptr<CmCacheNode>> cns;
  std::vector<Worker> workers;
  explicit CmRig(int n) {
    fab.add_node(NodeId::mn(0), 1 << 20);
    cfg.buffer_bytes = 1 << 16;
    cfg.entries = 64;
    mgr = std::make_unique<CmManager>(fab, cfg);
    for (int c = 0; c < n; ++c) {
      cns.push_back(std::make_unique<CmCacheNode>(static_cast<std::uint16_t>(c), fab, *mgr));
      mgr->attach(cns.back().get());
      Worker w;
      w.io.src = NodeId::cn(static_cast<std::uint16_t>(c));
      workers.push_back(w);
    }
  }
  template <class F>
  void in_task(F f) {
    ex.spawn("t", f);
    ex.run();
  }
};

std::vector<std::byte> image(std::uint64_t v) {
  std::vector<std::byte> b(64);
  bench::encode_object(kObj.offset, v, b);
  return b;
}

}  // namespace

TEST(CmCache, WriteWithTwoOwners) {
  CmRig r(3);
  r.in_task([&] {
    std::vector<std::byte> buf(64);
    r.cns[0]->read(r.workers[0], kObj, buf);
    r.cns[1]->read(r.workers[1], kObj, buf);
    const auto before = r.mgr->stats();
    auto img = image(1);
    EXPECT_EQ(r.cns[2]->write(r.workers[2], kObj, img), EventClass::kWriteCached);
    const auto& after = r.mgr->stats();
    EXPECT_EQ(after.rpcs - before.rpcs, 1u);
    EXPECT_EQ(after.invalidations - before.invalidations, 2u);
    EXPECT_EQ(after.source_writes - before.source_writes, 1u);
    EXPECT_EQ(r.cns[0]->read(r.workers[0], kObj, buf), EventClass::kReadMiss);
    EXPECT_EQ(bench::decode_object(kObj.offset, buf), 1u);
  });
}

TEST(CmCache, ReadHitIsLocal) {
  CmRig r(1);
  r.in_task([&] {
    std::vector<std::byte> buf(64);
    EXPECT_EQ(r.cns[0]->read(r.workers[0], kObj, buf), EventClass::kReadMiss);
    auto rpcs = r.mgr->stats().rpcs;
    auto ops = r.fab.stats().total_ops();
    EXPECT_EQ(r.cns[0]->read(r.workers[0], kObj, buf), EventClass::kReadHit);
    EXPECT_EQ(r.mgr->stats().rpcs, rpcs);
    EXPECT_EQ(r.fab.stats().total_ops(), ops);
  });
}

TEST(CmCache, ManagerSerializesPerObject) {
  CmRig r(2);
  std::vector<Nanos> done;
  for (int c = 0; c < 2; ++c)
    r.ex.spawn("w", [&, c] {
      auto img = image(static_cast<std::uint64_t>(c + 1));
      r.cns[static_cast<std::size_t>(c)]->write(r.workers[static_cast<std::size_t>(c)], kObj, img);
      done.push_back(r.ex.now());
    });
  r.ex.run();
  ASSERT_EQ(done.size(), 2u);
  EXPECT_GE(done[1] - done[0], r.cfg.service_time);
  EXPECT_GT(r.mgr->stats().queue_wait, 0);
}

TEST(NoCache, EveryAccessGoesToTheMn) {
  sim::SimExecutor ex;
  fabric::Fabric fab(ex, {});
  fab.add_node(NodeId::mn(0), 1 << 20);
  NoCache nc(0, fab);
  Worker w;
  w.io.src = NodeId::cn(0);
  ex.spawn("t", [&] {
    auto img = image(3);
    std::vector<std::byte> buf(64);
    EXPECT_EQ(nc.write(w, kObj, img), EventClass::kWriteBypass);
    EXPECT_EQ(nc.read(w, kObj, buf), EventClass::kReadBypass);
    EXPECT_EQ(nc.read(w, kObj, buf), EventClass::kReadBypass);
    EXPECT_EQ(buf, img);
    EXPECT_EQ(nc.atomic_faa(w, kObj + 128, 2), 0u);
    EXPECT_EQ(nc.atomic_cas(w, kObj + 128, 2, 7), 2u);
  });
  ex.run();
  EXPECT_EQ(fab.stats().total_ops(), 5u);
}

TEST(NoCache, DeadMnSurfacesAsFabricError) {
  sim::SimExecutor ex;
  fabric::Fabric fab(ex, {});
  fab.add_node(NodeId::mn(0), 1 << 20);
  NoCache nc(0, fab);
  fab.inject_failure(NodeId::mn(0));
  Worker w;
  w.io.src = NodeId::cn(0);
  ex.spawn("t", [&] {
    std::vector<std::byte> buf(64);
    EXPECT_THROW(nc.read(w, kObj, buf), FabricError);
  });
  ex.run();
}
