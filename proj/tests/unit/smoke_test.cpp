#include <gtest/gtest.h>

#include "difache/bench/experiment.hpp"

TEST(Smoke, TinyRun) {
  difache::bench::ExperimentConfig cfg;
  cfg.workload.cns = 2;
  cfg.workload.clients_per_cn = 2;
  cfg.workload.object_count = 100;
  cfg.workload.total_ops = 2000;
  cfg.cache.index.num_buckets = 4096;
  cfg.cache.buffer_bytes = 1 << 20;
  auto r = difache::bench::run_experiment(cfg);
  EXPECT_TRUE(r.validation.ok);
  EXPECT_EQ(r.metrics.ops(), 2000u);
}
