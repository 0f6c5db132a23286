#include <gtest/gtest.h>

#include <map>
#include <random>

#include "difache/common.hpp"
#include "difache/fabric/paged_memory.hpp"
#include "difache/index/hopscotch_index.hpp"

using namespace difache;
using index::HopscotchIndex;
using index::IndexConfig;

namespace {

struct Table {
  fabric::PagedMemory mem{1 << 24};
  IndexConfig cfg;
  std::unique_ptr<HopscotchIndex> idx;
  explicit Table(std::uint64_t buckets) {
    cfg.num_buckets = buckets;
    idx = std::make_unique<HopscotchIndex>(mem, 64, cfg, 1);
  }
};

std::uint64_t random_key(std::mt19937_64& rng, std::uint64_t space) { return rng() % space + 1; }

}  // namespace

TEST(Hopscotch, DifferentialAgainstMap) {
  Table t(256);
  auto& idx = *t.idx;
  std::map<std::uint64_t, std::uint32_t> oracle;
  std::mt19937_64 rng(11);
  const std::uint32_t H = IndexConfig::kNeighborhood;
  for (int i = 0; i < 100000; ++i) {
    const std::uint64_t k = random_key(rng, 400);
    switch (rng() % 4) {
      case 0:
      case 1: {
        auto v = static_cast<std::uint32_t>(rng());
        auto r = idx.insert(k, v);
        auto it = oracle.find(k);
        if (it != oracle.end()) {
          ASSERT_EQ(r.status, HopscotchIndex::InsertStatus::kAlreadyPresent);
          ASSERT_EQ(r.value, it->second);
        } else if (r.status == HopscotchIndex::InsertStatus::kInserted) {
          oracle[k] = v;
        } else {
          ASSERT_EQ(r.status, HopscotchIndex::InsertStatus::kFull);
        }
        break;
      }
      case 2: {
        auto got = idx.lookup(k);
        auto it = oracle.find(k);
        ASSERT_EQ(got.has_value(), it != oracle.end());
        if (got) ASSERT_EQ(*got, it->second);
        break;
      }
      case 3: {
        // The victim must be the lowest-ranked key stored in k's neighbourhood.
        std::optional<std::pair<std::uint32_t, std::uint64_t>> best;
        const std::uint64_t home = idx.home_bucket(k);
        for (std::uint64_t b = home; b < home + H; ++b) {
          auto key = idx.bucket_key(b);
          if (key && (!best || idx.bucket_value(b) < best->first)) best = {{idx.bucket_value(b), key}};
        }
        auto victim = idx.evict(k, [](std::uint64_t, std::uint32_t v) { return std::optional<std::uint64_t>(v); });
        ASSERT_EQ(victim.has_value(), best.has_value());
        if (victim) {
          ASSERT_EQ(victim->value, best->first);
          ASSERT_EQ(oracle.at(victim->key), victim->value);
          oracle.erase(victim->key);
        }
        break;
      }
    }
    ASSERT_EQ(idx.size(), oracle.size());
    ASSERT_EQ(idx.check_invariants(), "") << "after op " << i;
  }
  for (auto& [k, v] : oracle) ASSERT_EQ(idx.lookup(k), v);
}

TEST(Hopscotch, EraseThenReinsert) {
  Table t(64);
  auto& idx = *t.idx;
  EXPECT_EQ(idx.insert(5, 50).status, HopscotchIndex::InsertStatus::kInserted);
  EXPECT_TRUE(idx.erase(5));
  EXPECT_FALSE(idx.erase(5));
  EXPECT_FALSE(idx.lookup(5));
  EXPECT_EQ(idx.insert(5, 51).status, HopscotchIndex::InsertStatus::kInserted);
  EXPECT_EQ(idx.lookup(5), 51u);
}

TEST(Hopscotch, PinnedEntriesAreNotEvicted) {
  Table t(64);
  auto& idx = *t.idx;
  idx.insert(9, 1);
  auto v = idx.evict(9, [](std::uint64_t, std::uint32_t) { return std::optional<std::uint64_t>{}; });
  EXPECT_FALSE(v);
  EXPECT_EQ(idx.lookup(9), 1u);
}

TEST(Hopscotch, SnapshotSearchMatchesLocalLookup) {
  Table t(1024);
  auto& idx = *t.idx;
  std::mt19937_64 rng(5);
  std::vector<std::uint64_t> keys;
  for (int i = 0; i < 600; ++i) {
    auto k = random_key(rng, 1u << 30);
    if (idx.insert(k, static_cast<std::uint32_t>(i)).status == HopscotchIndex::InsertStatus::kInserted)
      keys.push_back(k);
  }
  for (int i = 0; i < 1000; ++i) {
    std::uint64_t k = i % 2 ? keys[rng() % keys.size()] : random_key(rng, 1u << 30);
    auto pr = HopscotchIndex::probe_range(t.cfg, 64, k);
    EXPECT_LE(pr.len, 5 * IndexConfig::kGroupBytes);
    std::vector<std::byte> snap(pr.len);
    t.mem.read(pr.offset, snap);
    auto s = HopscotchIndex::search_snapshot(t.cfg, k, snap, pr.first_group);
    auto l = idx.lookup(k);
    ASSERT_EQ(s.status == HopscotchIndex::SnapshotStatus::kFound, l.has_value());
    if (l) EXPECT_EQ(s.value, *l);
  }
}

TEST(Hopscotch, FillsWellPastHalfBeforeFirstFailure) {
  Table t(1 << 16);
  auto& idx = *t.idx;
  std::mt19937_64 rng(1);
  std::uint64_t n = 0;
  for (;;) {
    auto r = idx.insert(rng() | 1, 1);
    if (r.status == HopscotchIndex::InsertStatus::kFull) break;
    if (r.status == HopscotchIndex::InsertStatus::kInserted) ++n;
  }
  EXPECT_GT(static_cast<double>(n) / (1 << 16), 0.5);
  EXPECT_EQ(idx.check_invariants(), "");
}

TEST(IndexConfig, RejectsNonPowerOfTwo) {
  IndexConfig c;
  c.num_buckets = 100;
  EXPECT_THROW(c.validate(), ConfigError);
}
