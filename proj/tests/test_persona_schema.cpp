#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>

#include "spirit/persona_schema.hpp"
#include "spirit/synth_fixtures.hpp"
#include "test_support.hpp"

using namespace spirit;

namespace {

bool has(const std::vector<Violation>& vs, std::string_view path, ViolationKind kind) {
  return std::any_of(vs.begin(), vs.end(), [&](const Violation& v) { return v.path == path && v.kind == kind; });
}

}  // namespace

TEST(PersonaSchema, CanonicalArtifactRoundTrips) {
  auto p = testkit::canonical_profile();
  auto text = serialize_artifact(p);
  auto parsed = parse_artifact(text);
  ASSERT_TRUE(parsed.ok()) << describe(parsed.violations);
  EXPECT_EQ(*parsed.value, p);
  EXPECT_EQ(serialize_artifact(*parsed.value), text);
}

TEST(PersonaSchema, RandomProfilesRoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    auto p = synth::random_profile(rng);
    auto parsed = parse_artifact(serialize_artifact(p));
    ASSERT_TRUE(parsed.ok()) << describe(parsed.violations);
    EXPECT_EQ(*parsed.value, p);
  }
}

TEST(PersonaSchema, EveryMutationIsRejectedWithItsViolation) {
  auto corpus = testkit::persona_mutations();
  ASSERT_GE(corpus.size(), 30u);
  for (const auto& m : corpus) {
    auto r = parse_artifact(m.text);
    EXPECT_FALSE(r.ok()) << m.name;
    EXPECT_TRUE(has(r.violations, m.path, m.kind))
        << m.name << ": wanted " << m.path << " " << to_string(m.kind) << ", got " << describe(r.violations);
  }
}

TEST(PersonaSchema, AllViolationsAreCollectedAtOnce) {
  Json doc = to_json(testkit::canonical_profile());
  doc.erase("meta");
  doc["personality_big5"]["openness"]["confidence"] = "maybe";
  doc["extra"] = 1;
  auto r = validate_profile(doc);
  ASSERT_FALSE(r.ok());
  EXPECT_TRUE(has(r.violations, "meta", ViolationKind::missing_key));
  EXPECT_TRUE(has(r.violations, "personality_big5.openness.confidence", ViolationKind::bad_enum));
  EXPECT_TRUE(has(r.violations, "extra", ViolationKind::unknown_key));
}

TEST(PersonaSchema, NonObjectAndBadJson) {
  EXPECT_TRUE(has(validate_profile(Json::array()).violations, "$", ViolationKind::not_an_object));
  auto r = parse_artifact("{\"personality_big5\": \n---\nnarrative");
  EXPECT_TRUE(has(r.violations, "$", ViolationKind::parse_error));
}

TEST(PersonaSchema, FencedJsonIsAccepted) {
  auto p = testkit::canonical_profile();
  auto text = "```json\n" + to_json(p).dump(2) + "\n```\n---\n" + p.narrative;
  auto r = parse_artifact(text);
  ASSERT_TRUE(r.ok()) << describe(r.violations);
  EXPECT_EQ(*r.value, p);
}

TEST(PersonaSchema, NarrativeLengthOnlyWarns) {
  auto p = testkit::canonical_profile();
  p.narrative = "Too short.";
  auto r = parse_artifact(serialize_artifact(p));
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(PersonaSchema, SeparatorSplitsOnFirstDashLine) {
  auto parts = split_artifact("{}\n  ---  \nfirst\n---\nsecond");
  ASSERT_TRUE(parts);
  EXPECT_EQ(parts->json_part, "{}\n");
  EXPECT_EQ(parts->narrative, "first\n---\nsecond");
}

TEST(PersonaSchema, LowConfidenceCountMatchesScan) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    auto p = synth::random_profile(rng);
    // Independent count over the serialized form.
    std::size_t low = 0, total = 0;
    std::function<void(const Json&)> walk = [&](const Json& n) {
      if (n.is_object()) {
        if (auto it = n.find("confidence"); it != n.end()) {
          ++total;
          low += *it == "low";
        }
        for (const auto& [k, v] : n.items()) walk(v);
      } else if (n.is_array()) {
        for (const auto& v : n) walk(v);
      }
    };
    walk(to_json(p));
    EXPECT_EQ(count_low_confidence(p), low);
    EXPECT_EQ(judgment_count(p), total);
  }
}

TEST(PersonaSchema, DemographicKeysDetected) {
  for (auto k : {"age", "gender", "income", "race", "political_ideology"}) EXPECT_TRUE(is_demographic_key(k)) << k;
  for (auto k : {"tone", "openness", "topic"}) EXPECT_FALSE(is_demographic_key(k)) << k;
}

TEST(PersonaSchema, LeanStrings) {
  const auto& dim = primal_dimensions()[0];
  EXPECT_EQ(lean_string(dim, Lean::leans_a), "leans_good");
  EXPECT_EQ(lean_string(dim, Lean::leans_b), "leans_bad");
  EXPECT_EQ(parse_lean(dim, "balanced"), Lean::balanced);
  EXPECT_FALSE(parse_lean(dim, "leans_safe"));
}

TEST(DemographicPersona, SevenFieldsWithExplicitMissing) {
  DemographicPersona d;
  d.age = 34;
  d.gender = "female";
  auto j = to_json(d);
  ASSERT_EQ(j.size(), 7u);
  EXPECT_EQ(j["income"], "missing");
  EXPECT_EQ(demographics_from_json(j), d);
  auto text = render_demographics(d);
  EXPECT_NE(text.find("age: 34"), std::string::npos);
  EXPECT_NE(text.find("income: missing"), std::string::npos);
  j.erase("urbanicity");
  EXPECT_THROW(demographics_from_json(j), DataError);
}
