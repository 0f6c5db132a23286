#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "difache/sim/executor.hpp"

using namespace difache;
using sim::SimExecutor;

TEST(SimExecutor, TimedOrderFollowsWakeTimes) {
  SimExecutor ex;
  std::vector<std::string> log;
  ex.spawn("a", [&] {
    ex.delay(30);
    log.push_back("a30");
  });
  ex.spawn("b", [&] {
    ex.delay(10);
    log.push_back("b10");
    ex.delay(30);
    log.push_back("b40");
  });
  ex.run();
  EXPECT_EQ(log, (std::vector<std::string>{"b10", "a30", "b40"}));
  EXPECT_EQ(ex.now(), 40);
}

TEST(SimExecutor, RandomOrderIsReproducible) {
  auto trace = [](std::uint64_t seed) {
    sim::SimOptions o;
    o.mode = sim::ScheduleMode::kRandomOrder;
    o.seed = seed;
    SimExecutor ex(o);
    std::string s;
    for (char c : std::string("abcd"))
      ex.spawn(std::string(1, c), [&, c] {
        for (int i = 0; i < 5; ++i) {
          s += c;
          ex.yield();
        }
      });
    ex.run();
    return s;
  };
  EXPECT_EQ(trace(7), trace(7));
  EXPECT_NE(trace(7), trace(8));
}

TEST(SimExecutor, SpawnDuringRun) {
  SimExecutor ex;
  int done = 0;
  ex.spawn("parent", [&] {
    ex.delay(5);
    ex.spawn("child", [&] {
      ex.delay(5);
      ++done;
    });
    ++done;
  });
  ex.run();
  EXPECT_EQ(done, 2);
  EXPECT_EQ(ex.now(), 10);
}

TEST(SimExecutor, SemaphoreBoundsConcurrency) {
  SimExecutor ex;
  auto sem = ex.make_semaphore(2);
  int inside = 0, peak = 0;
  for (int i = 0; i < 6; ++i)
    ex.spawn("t", [&] {
      sem->acquire();
      peak = std::max(peak, ++inside);
      ex.delay(100);
      --inside;
      sem->release();
    });
  ex.run();
  EXPECT_EQ(peak, 2);
  EXPECT_EQ(ex.now(), 300);
}

TEST(SimExecutor, TaskExceptionPropagates) {
  SimExecutor ex;
  ex.spawn("bad", [&] {
    ex.delay(1);
    throw std::runtime_error("boom");
  });
  EXPECT_THROW(ex.run(), std::runtime_error);
}

TEST(SimExecutor, StepLimitRaisesLiveness) {
  sim::SimOptions o;
  o.step_limit = 100;
  SimExecutor ex(o);
  ex.spawn("spin", [&] {
    for (;;) ex.yield();
  });
  EXPECT_THROW(ex.run(), LivenessError);
}

TEST(InterleavingExplorer, EnumeratesEveryInterleaving) {
  // Two tasks of two atomic steps each: C(4,2) = 6 orders.
  std::set<std::string> seen;
  auto r = sim::InterleavingExplorer::explore(
      [&](SimExecutor& ex) {
        std::string s;
        for (char c : std::string("ab"))
          ex.spawn(std::string(1, c), [&, c] {
            s += c;
            ex.yield();
            s += c;
          });
        ex.run();
        seen.insert(s);
      },
      1000);
  EXPECT_TRUE(r.exhausted);
  EXPECT_EQ(seen.size(), 6u);
  EXPECT_EQ(r.runs, 6u);
}

TEST(ThreadExecutor, DelayIsTheOnlyInterleavingPoint) {
  sim::ThreadExecutor ex;
  long counter = 0;
  for (int t = 0; t < 4; ++t)
    ex.spawn("t", [&] {
      for (int i = 0; i < 1000; ++i) {
        long v = counter;
        counter = v + 1;
        ex.delay(1);
      }
    });
  ex.run();
  EXPECT_EQ(counter, 4000);
  EXPECT_FALSE(ex.deterministic());
}
