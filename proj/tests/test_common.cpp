#include <gtest/gtest.h>

#include "spirit/common.hpp"
#include "test_support.hpp"

using namespace spirit;

TEST(Text, TrimAndWords) {
  EXPECT_EQ(trim("  a b \n\t"), "a b");
  EXPECT_EQ(trim("   "), "");
  EXPECT_EQ(count_words("one  two\nthree\t four "), 4u);
  EXPECT_EQ(count_words(""), 0u);
}

TEST(Text, SplitLinesHandlesCrlfAndMissingFinalNewline) {
  auto lines = split_lines("a\r\nb\nc");
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(trim(lines[0]), "a");
  EXPECT_EQ(lines[1], "b");
  EXPECT_EQ(lines[2], "c");
}

TEST(Text, StripCodeFence) {
  EXPECT_EQ(strip_code_fence("```json\n{\"a\":1}\n```"), "{\"a\":1}");
  EXPECT_EQ(strip_code_fence("```\n[1]\n```\n"), "[1]");
  EXPECT_EQ(strip_code_fence("  {\"a\":1} "), "{\"a\":1}");
}

TEST(Json, ParseRejectsGarbageWithoutThrowing) {
  EXPECT_TRUE(parse_json("{\"a\": [1, 2]}").has_value());
  EXPECT_FALSE(parse_json("{\"a\": ").has_value());
  EXPECT_FALSE(parse_json("").has_value());
  EXPECT_FALSE(parse_json("{} trailing").has_value());
}

TEST(Json, ParseReadsOnlyTheViewNotTheUnderlyingBuffer) {
  std::string buf = "{\"x\":1}\n{\"y\":2}";
  auto j = parse_json(std::string_view(buf).substr(0, 7));
  ASSERT_TRUE(j);
  EXPECT_EQ((*j)["x"], 1);
}

TEST(Hash, Fnv1aReferenceVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Time, Iso8601RoundTripAndOffsets) {
  auto t = parse_iso8601("2023-11-14T22:13:20Z");
  ASSERT_TRUE(t);
  EXPECT_EQ(t->time_since_epoch().count(), 1700000000);
  EXPECT_EQ(format_iso8601(*t), "2023-11-14T22:13:20Z");
  EXPECT_EQ(parse_iso8601("2023-11-14T22:13:20.250+00:00"), t);
  EXPECT_EQ(parse_iso8601("2023-11-15T00:13:20+02:00"), t);
  EXPECT_FALSE(parse_iso8601("2023-13-01T00:00:00Z"));
  EXPECT_FALSE(parse_iso8601("yesterday"));
}

TEST(Time, SourceDateEpochPinsNow) {
  testkit::ScopedEnv env("SOURCE_DATE_EPOCH", "1700000000");
  EXPECT_EQ(now_or_source_date().time_since_epoch().count(), 1700000000);
}

TEST(Violations, DescribeNamesPathAndKind) {
  Violation v{"meta.notable_absences", ViolationKind::missing_key, ""};
  auto s = describe(v);
  EXPECT_NE(s.find("meta.notable_absences"), std::string::npos);
  EXPECT_NE(s.find("missing_key"), std::string::npos);
}
