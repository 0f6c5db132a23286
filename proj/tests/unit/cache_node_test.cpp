#include <gtest/gtest.h>

#include <cstring>

#include "difache/bench/versioned.hpp"
#include "support/world.hpp"

using namespace difache;
using difache::check::World;
using fabric::OpKind;
using fabric::OpPurpose;
using owner::TrackingMode;

namespace {

const RemoteAddr kObj{NodeId::mn(0), kFirstObjectOffset};

std::vector<std::byte> image(std::uint64_t version, std::uint32_t size = 64) {
  std::vector<std::byte> b(size);
  bench::encode_object(kObj.offset, version, b);
  return b;
}

std::uint64_t version_of(std::span<const std::byte> b) {
  auto v = bench::decode_object(kObj.offset, b);
  return v ? *v : ~std::uint64_t{0};
}

template <class F>
void in_task(sim::SimExecutor& ex, F f) {
  ex.spawn("t", f);
  ex.run();
}

}  // namespace

TEST(CacheNode, MissThenHit) {
  sim::SimExecutor ex;
  World w(ex, {0}, TrackingMode::kBroadcast, check::small_cache(false));
  auto wk = w.worker(0);
  std::vector<std::byte> buf(64);
  in_task(ex, [&] {
    EXPECT_EQ(w.cn(0).read(wk, kObj, buf), EventClass::kReadMiss);
    EXPECT_EQ(w.cn(0).read(wk, kObj, buf), EventClass::kReadHit);
  });
  EXPECT_EQ(version_of(buf), 0u);
  ASSERT_TRUE(w.cn(0).header(kObj));
  EXPECT_TRUE(w.cn(0).header(kObj)->valid());
}

TEST(CacheNode, WriteInvalidatesPeerCopy) {
  for (auto mode : {TrackingMode::kBroadcast, TrackingMode::kOwnerSets}) {
    sim::SimExecutor ex;
    World w(ex, {0, 1}, mode, check::small_cache(false));
    auto w0 = w.worker(0), w1 = w.worker(1);
    std::vector<std::byte> buf(64);
    in_task(ex, [&] {
      w.cn(0).read(w0, kObj, buf);
      EXPECT_TRUE(w.cn(0).header(kObj)->valid());
      auto img = image(1);
      EXPECT_EQ(w.cn(1).write(w1, kObj, img), EventClass::kWriteCached);
      EXPECT_FALSE(w.cn(0).header(kObj)->valid());
      EXPECT_EQ(w.cn(0).read(w0, kObj, buf), EventClass::kReadMiss);
      EXPECT_EQ(version_of(buf), 1u);
      // The writer's own copy was refreshed in place.
      EXPECT_EQ(w.cn(1).read(w1, kObj, buf), EventClass::kReadHit);
      EXPECT_EQ(version_of(buf), 1u);
    });
    EXPECT_EQ(w.cn(1).stats().invalidation_msgs, 1u);
  }
}

TEST(CacheNode, RemoteLookupIsOneRead) {
  sim::SimExecutor ex;
  World w(ex, {0, 1}, TrackingMode::kBroadcast, check::small_cache(false));
  auto w0 = w.worker(0);
  auto w1 = w.worker(1);
  std::vector<std::byte> buf(64);
  in_task(ex, [&] {
    w.cn(0).read(w0, kObj, buf);
    auto before = w.fab.stats().total_ops();
    auto off = w.cn(1).lookup_remote(w1.io, 0, pack_key(kObj));
    EXPECT_TRUE(off);
    EXPECT_EQ(w.fab.stats().total_ops() - before, 1u);
    EXPECT_FALSE(w.cn(1).lookup_remote(w1.io, 0, pack_key(kObj + 4096)));
  });
  EXPECT_EQ(w.fab.stats().count(OpKind::kRead, OpPurpose::kIndexProbe), 2u);
  EXPECT_EQ(w.fab.stats().count_purpose(OpPurpose::kProbeRetry), 0u);
}

TEST(CacheNode, EvictionKeepsContentsCorrect) {
  sim::SimExecutor ex;
  auto cfg = check::small_cache(false);
  cfg.buffer_bytes = 4 * 256;
  cfg.max_object_bytes = 256;
  World w(ex, {0}, TrackingMode::kBroadcast, cfg);
  auto wk = w.worker(0);
  in_task(ex, [&] {
    std::vector<std::byte> buf(200);
    for (std::uint64_t i = 0; i < 20; ++i) {
      RemoteAddr o{NodeId::mn(0), kFirstObjectOffset + 256 * i};
      std::vector<std::byte> img(200);
      bench::encode_object(o.offset, i + 1, img);
      w.cn(0).write(wk, o, img);
    }
    for (int round = 0; round < 3; ++round)
      for (std::uint64_t i = 0; i < 20; ++i) {
        RemoteAddr o{NodeId::mn(0), kFirstObjectOffset + 256 * i};
        w.cn(0).read(wk, o, buf);
        EXPECT_EQ(bench::decode_object(o.offset, buf), i + 1);
      }
  });
  EXPECT_GT(w.cn(0).stats().evictions + w.cn(0).stats().buffer_reclaims, 0u);
  EXPECT_TRUE(w.cn(0).buffer_pool().consistent());
}

TEST(CacheNode, BatchedAccesses) {
  sim::SimExecutor ex;
  World w(ex, {0, 1}, TrackingMode::kOwnerSets, check::small_cache(false));
  auto w0 = w.worker(0), w1 = w.worker(1);
  in_task(ex, [&] {
    std::vector<std::vector<std::byte>> imgs, outs;
    std::vector<core::WriteRequest> wr;
    std::vector<core::ReadRequest> rr;
    for (std::uint64_t i = 0; i < 3; ++i) {
      RemoteAddr o{NodeId::mn(0), kFirstObjectOffset + 64 * i};
      imgs.emplace_back(64);
      bench::encode_object(o.offset, 7, imgs.back());
      outs.emplace_back(64);
    }
    for (std::uint64_t i = 0; i < 3; ++i) {
      RemoteAddr o{NodeId::mn(0), kFirstObjectOffset + 64 * i};
      wr.push_back({o, imgs[i], o, 64});
      rr.push_back({o, outs[i], o, 64});
    }
    auto r1 = w.cn(0).read_batch(w0, rr);
    auto r2 = w.cn(1).write_batch(w1, wr);
    auto r3 = w.cn(0).read_batch(w0, rr);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(r1[i].status, FabricStatus::kOk);
      EXPECT_EQ(r2[i].event, EventClass::kWriteCached);
      EXPECT_EQ(r3[i].event, EventClass::kReadMiss);
      EXPECT_EQ(bench::decode_object(kFirstObjectOffset + 64 * i, outs[i]), 7u);
    }
  });
}

TEST(CacheNode, NestedObjectsShareTheAncestorCopy) {
  sim::SimExecutor ex;
  World w(ex, {0, 1}, TrackingMode::kBroadcast, check::small_cache(false));
  auto w0 = w.worker(0), w1 = w.worker(1);
  in_task(ex, [&] {
    std::array<std::byte, 16> part{}, out{};
    std::memset(part.data(), 0x5a, part.size());
    RemoteAddr child = kObj + 32;
    w.cn(0).read_nested(w0, child, kObj, 128, out);
    w.cn(1).write_nested(w1, child, kObj, 128, part);
    w.cn(0).read_nested(w0, child, kObj, 128, out);
    EXPECT_EQ(out, part);
    EXPECT_THROW(w.cn(0).read_nested(w0, kObj + 120, kObj, 128, out), RangeNotContained);
  });
}

TEST(CacheNode, AtomicsFallBackToTheFabric) {
  sim::SimExecutor ex;
  World w(ex, {0, 1}, TrackingMode::kBroadcast, check::small_cache(false));
  auto w0 = w.worker(0), w1 = w.worker(1);
  in_task(ex, [&] {
    std::array<std::byte, 8> out{};
    w.cn(0).read(w0, kObj, out);
    EXPECT_EQ(w.cn(1).atomic_faa(w1, kObj, 5), 0u);
    EXPECT_EQ(w.cn(1).atomic_cas(w1, kObj, 5, 9), 5u);
    w.cn(0).read(w0, kObj, out);
    std::uint64_t v;
    std::memcpy(&v, out.data(), 8);
    EXPECT_EQ(v, 9u);
  });
}

TEST(ModeSwitch, FreshObjectReadOnlySwitchesOnAfterEightReads) {
  sim::SimExecutor ex;
  World w(ex, {0}, TrackingMode::kBroadcast, check::small_cache(true));
  auto wk = w.worker(0);
  in_task(ex, [&] {
    std::vector<std::byte> buf(64);
    for (int i = 0; i < 7; ++i) EXPECT_EQ(w.cn(0).read(wk, kObj, buf), EventClass::kReadBypass);
    auto h = w.cn(0).header(kObj);
    ASSERT_TRUE(h);
    EXPECT_FALSE(h->mode_on());
    EXPECT_EQ(h->interval(), 8);
    EXPECT_NEAR(h->threshold(), 0.75, 1e-4);
    w.cn(0).read(wk, kObj, buf);
    h = w.cn(0).header(kObj);
    EXPECT_TRUE(h->mode_on());
    EXPECT_EQ(h->interval(), 255);
    EXPECT_EQ(w.cn(0).read(wk, kObj, buf), EventClass::kReadMiss);
    EXPECT_EQ(w.cn(0).read(wk, kObj, buf), EventClass::kReadHit);
  });
}

TEST(ModeSwitch, ConcurrentSwitchersAgree) {
  sim::SimExecutor ex;
  World w(ex, {0, 1}, TrackingMode::kBroadcast, check::small_cache(true));
  auto w0 = w.worker(0), w1 = w.worker(1);
  std::vector<core::SwitchResult> results;
  ex.spawn("setup", [&] {
    std::vector<std::byte> buf(64);
    w.cn(0).read(w0, kObj, buf);
    w.cn(1).read(w1, kObj, buf);
    ex.spawn("s0", [&] { results.push_back(w.cn(0).switch_mode(w0, pack_key(kObj), true)); });
    ex.spawn("s1", [&] { results.push_back(w.cn(1).switch_mode(w1, pack_key(kObj), true)); });
  });
  ex.run();
  ASSERT_EQ(results.size(), 2u);
  std::sort(results.begin(), results.end());
  EXPECT_EQ(results[0], core::SwitchResult::kSwitched);
  EXPECT_EQ(results[1], core::SwitchResult::kAlreadySwitched);
  auto h0 = w.cn(0).header(kObj), h1 = w.cn(1).header(kObj);
  for (auto& h : {h0, h1}) {
    ASSERT_TRUE(h);
    EXPECT_TRUE(h->mode_on());
    EXPECT_FALSE(h->switching());
    EXPECT_FALSE(h->valid());
    EXPECT_EQ(h->interval(), 255);
  }
  EXPECT_EQ(h0->threshold(), h1->threshold());
  // The mode lock is free again.
  EXPECT_EQ(w.fab.memory(NodeId::mn(0)).load(w.layout.mode_lock(pack_key(kObj)).offset), 0u);
}

TEST(ModeSwitch, NewHeaderAdoptsPeerMode) {
  sim::SimExecutor ex;
  World w(ex, {0, 1}, TrackingMode::kBroadcast, check::small_cache(true));
  auto w0 = w.worker(0), w1 = w.worker(1);
  in_task(ex, [&] {
    std::vector<std::byte> buf(64);
    for (int i = 0; i < 8; ++i) w.cn(0).read(w0, kObj, buf);
    ASSERT_TRUE(w.cn(0).header(kObj)->mode_on());
    w.cn(1).read(w1, kObj, buf);
    auto h = w.cn(1).header(kObj);
    EXPECT_TRUE(h->mode_on());
    EXPECT_EQ(h->interval(), 255);
  });
}

TEST(CacheNode, AtomicSwitchesCachedObjectOff) {
  sim::SimExecutor ex;
  World w(ex, {0, 1}, TrackingMode::kBroadcast, check::small_cache(true));
  auto w0 = w.worker(0), w1 = w.worker(1);
  in_task(ex, [&] {
    std::array<std::byte, 8> out{};
    for (int i = 0; i < 8; ++i) w.cn(0).read(w0, kObj, out);
    w.cn(1).read(w1, kObj, out);
    ASSERT_TRUE(w.cn(0).header(kObj)->mode_on());
    EXPECT_EQ(w.cn(1).atomic_faa(w1, kObj, 5), 0u);
    EXPECT_FALSE(w.cn(0).header(kObj)->mode_on());
    EXPECT_FALSE(w.cn(1).header(kObj)->mode_on());
    EXPECT_EQ(w.cn(0).read(w0, kObj, out), EventClass::kReadBypass);
    std::uint64_t v;
    std::memcpy(&v, out.data(), 8);
    EXPECT_EQ(v, 5u);
  });
}
