#include <gtest/gtest.h>

#include "difache/bench/experiment.hpp"
#include "difache/bench/metrics.hpp"

using namespace difache;
using namespace difache::bench;

TEST(Metrics, CountsAndHitRate) {
  Metrics m;
  m.record(EventClass::kReadHit, 100, 64, 1000);
  m.record(EventClass::kReadMiss, 5000, 64, 2000);
  m.record(EventClass::kWriteCached, 9000, 64, 3000);
  m.sim_time = 1000000;
  EXPECT_EQ(m.ops(), 3u);
  EXPECT_EQ(m.reads(), 2u);
  EXPECT_DOUBLE_EQ(m.hit_rate(), 0.5);
  EXPECT_DOUBLE_EQ(m.throughput(), 3000.0);
  EXPECT_DOUBLE_EQ(m.hit_rate_window(0, 2), 0.5);
}

TEST(Metrics, CsvLayout) {
  Metrics m;
  m.record(EventClass::kReadBypass, 4000, 64, 10);
  m.sim_time = 4000;
  auto csv = m.csv();
  EXPECT_EQ(csv.rfind("event_class,count,p50,p99,bytes\n", 0), 0u);
  EXPECT_NE(csv.find("read_bypass,1,"), std::string::npos);
  EXPECT_NE(csv.find("throughput,hit_rate,invalidations,mn_bytes\n"), std::string::npos);
}

namespace {

ExperimentConfig tiny(std::uint64_t seed, Coherence c) {
  ExperimentConfig cfg;
  cfg.coherence = c;
  cfg.workload.cns = 2;
  cfg.workload.clients_per_cn = 3;
  cfg.workload.object_count = 50;
  cfg.workload.total_ops = 3000;
  cfg.workload.read_ratio = 0.8;
  cfg.workload.seed = seed;
  cfg.fabric.torn_read_injection = true;
  cfg.cache.index.num_buckets = 1024;
  cfg.cache.buffer_bytes = 1 << 20;
  return cfg;
}

}  // namespace

TEST(Experiment, RerunIsByteIdentical) {
  for (auto c : {Coherence::kDifache, Coherence::kDifacheNoac, Coherence::kCmcache, Coherence::kNocache}) {
    auto a = run_experiment(tiny(4, c));
    auto b = run_experiment(tiny(4, c));
    EXPECT_EQ(a.csv, b.csv) << to_string(c);
    EXPECT_TRUE(a.validation.ok) << to_string(c);
  }
  EXPECT_NE(run_experiment(tiny(4, Coherence::kDifache)).csv,
            run_experiment(tiny(5, Coherence::kDifache)).csv);
}

TEST(Experiment, SkipInvalidationIsCaught) {
  auto cfg = tiny(1, Coherence::kDifacheNoac);
  cfg.workload.read_ratio = 0.5;
  cfg.workload.total_ops = 20000;
  cfg.skip_invalidation = true;
  cfg.fabric.torn_read_injection = false;
  EXPECT_FALSE(run_experiment(cfg).validation.ok);
}

TEST(Experiment, ThreadModeValidates) {
  auto cfg = tiny(2, Coherence::kDifache);
  cfg.deterministic = false;
  auto r = run_experiment(cfg);
  EXPECT_TRUE(r.validation.ok);
  EXPECT_EQ(r.metrics.ops(), 3000u);
}

TEST(Experiment, CoherenceNames) {
  EXPECT_EQ(parse_coherence("difache-noac"), Coherence::kDifacheNoac);
  EXPECT_THROW(parse_coherence("mesi"), std::invalid_argument);
}

TEST(Experiment, TrackingPolicyReachesTheCoordinator) {
  auto cfg = tiny(3, Coherence::kDifacheNoac);
  cfg.coord.tracking = owner::TrackingPolicy::kOwnerSets;
  auto own = run_experiment(cfg);
  cfg.coord.tracking = owner::TrackingPolicy::kBroadcast;
  auto bc = run_experiment(cfg);
  EXPECT_GT(own.fabric.count_purpose(fabric::OpPurpose::kOwnerSet), 0u);
  EXPECT_EQ(bc.fabric.count_purpose(fabric::OpPurpose::kOwnerSet), 0u);
}

TEST(Experiment, RecoveryWaitsForEveryScheduledKill) {
  auto cfg = tiny(3, Coherence::kDifache);
  cfg.workload.total_ops = 20000;
  cfg.faults.kill_cn = 1;
  cfg.faults.kill_cn_at = 2000;
  cfg.faults.kill_mn_at = 8000;
  cfg.faults.recover_after = 1000;
  auto r = run_experiment(cfg);
  ASSERT_EQ(r.faults.size(), 4u);
  EXPECT_EQ(r.faults[0].kind, FaultKind::kKillCn);
  EXPECT_EQ(r.faults[1].kind, FaultKind::kKillMn);
  EXPECT_EQ(r.faults[2].kind, FaultKind::kRecoverMn);
  EXPECT_EQ(r.faults[3].kind, FaultKind::kRecoverCn);
  EXPECT_TRUE(r.validation.ok);
  EXPECT_LT(r.metrics.failed_ops, 2000u);
}
