#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include "difache/bench/trace.hpp"

using namespace difache::bench;

TEST(Trace, ParsesTheCsvFields) {
  auto r = parse_trace_line("17,user:42,12,300,7,get,0");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->timestamp, 17u);
  EXPECT_EQ(r->key, "user:42");
  EXPECT_EQ(r->key_size, 12u);
  EXPECT_EQ(r->value_size, 300u);
  EXPECT_EQ(r->client_id, 7u);
  EXPECT_EQ(r->operation, "get");
}

TEST(Trace, KeysMayContainCommas) {
  auto r = parse_trace_line("1,a,b,c,5,10,2,set,3600");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->key, "a,b,c");
  EXPECT_EQ(r->operation, "set");
  EXPECT_EQ(r->ttl, 3600u);
}

TEST(Trace, MalformedLinesAreRejected) {
  EXPECT_FALSE(parse_trace_line("1,k,2,3,get,0"));
  EXPECT_FALSE(parse_trace_line("x,k,2,3,4,get,0"));
  EXPECT_FALSE(parse_trace_line("1,k,2,-3,4,get,0"));
  EXPECT_FALSE(parse_trace_line(""));
}

TEST(Trace, VerbMapping) {
  EXPECT_EQ(classify_verb("get"), TraceVerb::kRead);
  EXPECT_EQ(classify_verb("gets"), TraceVerb::kRead);
  for (auto v : {"set", "add", "replace", "cas", "append", "prepend", "incr", "decr"})
    EXPECT_EQ(classify_verb(v), TraceVerb::kWrite) << v;
  EXPECT_EQ(classify_verb("delete"), TraceVerb::kIgnored);
  EXPECT_EQ(classify_verb("flush"), TraceVerb::kIgnored);
}

TEST(Trace, TextSummary) {
  auto t = parse_trace_text(
      "1,a,4,100,0,get,0\n"
      "2,a,4,100000,1,set,0\n"
      "3,b,4,1,0,delete,0\n"
      "garbage\n"
      "\n"
      "4,c,1,2,0,get,0\n");
  EXPECT_EQ(t.lines, 5u);
  EXPECT_EQ(t.malformed, 1u);
  EXPECT_EQ(t.ignored, 1u);
  ASSERT_EQ(t.ops.size(), 3u);
  EXPECT_FALSE(t.ops[0].write);
  EXPECT_TRUE(t.ops[1].write);
  EXPECT_EQ(t.ops[0].key_hash, t.ops[1].key_hash);
  EXPECT_EQ(t.ops[1].size, 65536u);
  EXPECT_EQ(t.ops[2].size, 16u);
}

TEST(Trace, FileErrors) {
  EXPECT_THROW(parse_trace("/nonexistent/trace.csv"), FileNotFound);
  std::string path = ::testing::TempDir() + "empty_trace.csv";
  {
    std::ofstream f(path);
    f << "1,a,1,1,0,delete,0\n";
  }
  EXPECT_THROW(parse_trace(path), EmptyTrace);
  std::remove(path.c_str());
}
