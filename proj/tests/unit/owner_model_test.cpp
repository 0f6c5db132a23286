#include <gtest/gtest.h>

#include "../support/model_check.hpp"

using difache::check::model_check_owner_sets;

TEST(OwnerModel, ReadMissAgainstWrite) {
  auto r = model_check_owner_sets({"r", "w"});
  EXPECT_EQ(r.violation, "");
  EXPECT_TRUE(r.exhausted);
  EXPECT_GT(r.runs, 1u);
}

TEST(OwnerModel, RereadAfterConcurrentWrite) {
  auto r = model_check_owner_sets({"rr", "wr"});
  EXPECT_EQ(r.violation, "");
  EXPECT_TRUE(r.exhausted);
}

TEST(OwnerModel, LongerScripts) {
  auto r = model_check_owner_sets({"rrr", "wrw"});
  EXPECT_EQ(r.violation, "");
  EXPECT_TRUE(r.exhausted);
}

TEST(OwnerModel, StrictCheckSeesTheInvalidationWindow) {
  auto r = model_check_owner_sets({"r", "w"}, 200000, false);
  EXPECT_NE(r.violation, "");
}
