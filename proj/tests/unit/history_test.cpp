#include <gtest/gtest.h>

#include <vector>

#include "difache/bench/history.hpp"
#include "difache/bench/versioned.hpp"

using namespace difache::bench;

namespace {

HistoryOp w(std::uint64_t v, std::uint64_t s, std::uint64_t e) { return {1, true, v, s, e, 0}; }
HistoryOp r(std::uint64_t v, std::uint64_t s, std::uint64_t e) { return {1, false, v, s, e, 1}; }

}  // namespace

TEST(History, AcceptsLinearizableReads) {
  std::vector<HistoryOp> h{w(1, 1, 4), r(0, 2, 3), r(1, 3, 6), r(1, 5, 7), w(2, 8, 12), r(2, 9, 10)};
  auto res = validate_history(h);
  EXPECT_TRUE(res.ok);
  EXPECT_EQ(res.reads, 4u);
  EXPECT_EQ(res.writes, 2u);
}

TEST(History, StaleReadIsAViolation) {
  std::vector<HistoryOp> h{w(1, 1, 2), w(2, 3, 4), r(1, 5, 6)};
  auto res = validate_history(h);
  ASSERT_FALSE(res.ok);
  EXPECT_EQ(res.violations, 1u);
  ASSERT_TRUE(res.first);
  EXPECT_EQ(res.first->lower, 2u);
  EXPECT_EQ(res.first->version, 1u);
  EXPECT_NE(res.first->describe().find("version 1"), std::string::npos);
}

TEST(History, ReadFromTheFutureIsAViolation) {
  std::vector<HistoryOp> h{r(1, 1, 2), w(1, 3, 4)};
  EXPECT_FALSE(validate_history(h).ok);
}

TEST(History, IncompleteWriteMayOrMayNotBeSeen) {
  std::vector<HistoryOp> h{w(1, 1, 2), w(2, 3, kNever), r(2, 5, 6), r(1, 7, 8)};
  // An unfinished write never forces later reads to see it.
  EXPECT_TRUE(validate_history(h).ok);
}

TEST(History, DisabledRecorderDropsOps) {
  History h;
  h.set_enabled(false);
  h.add(w(1, 1, 2));
  EXPECT_TRUE(h.ops().empty());
}

TEST(Versioned, RoundTripAndTornDetection) {
  std::vector<std::byte> img(100);
  encode_object(5, 9, img);
  EXPECT_EQ(decode_object(5, img), 9u);
  auto torn = img;
  torn[50] ^= std::byte{1};
  EXPECT_FALSE(decode_object(5, torn));
  std::vector<std::byte> zero(100);
  EXPECT_EQ(decode_object(5, zero), 0u);
  std::vector<std::byte> other(100);
  encode_object(6, 9, other);
  EXPECT_FALSE(decode_object(5, other));
}
