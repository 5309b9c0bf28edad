#include <gtest/gtest.h>

#include "spirit/painter.hpp"
#include "spirit/prompts.hpp"
#include "test_support.hpp"

using namespace spirit;

namespace {

using Rules = std::vector<ScriptedMockBackend::Rule>;

UserDocument sample_document() {
  std::vector<Post> posts = {{"u1", Platform::reddit, Instant{std::chrono::seconds(1700000000)}, "I ride the bus.", false}};
  return build_document(posts);
}

}  // namespace

TEST(Prompts, RenderIsSinglePass) {
  EXPECT_EQ(prompts::render("a {x} b {y}", {{"x", "{y}"}, {"y", "2"}}), "a {y} b 2");
  EXPECT_EQ(prompts::render("{unbound} {x}", {{"x", "1"}}), "{unbound} 1");
}

TEST(Painter, PromptCarriesSchemaAndDocument) {
  auto doc = sample_document();
  auto req = render_painter_prompt(doc, 0.4);
  EXPECT_NE(req.system_prompt.find(std::string(schema_template()).substr(0, 40)), std::string::npos);
  EXPECT_EQ(req.system_prompt.find("{schema}"), std::string::npos);
  EXPECT_NE(req.user_prompt.find("I ride the bus."), std::string::npos);
  EXPECT_DOUBLE_EQ(req.temperature, 0.4);
}

TEST(Painter, RetriesUntilArtifactValidates) {
  auto profile = testkit::canonical_profile();
  ScriptedMockBackend backend(Rules{{"", {"not an artifact", "{}\n---\nstill wrong", serialize_artifact(profile)}}});
  auto r = paint(sample_document(), backend);
  EXPECT_EQ(r.receipt.attempts, 3);
  EXPECT_EQ(r.profile, profile);
}

TEST(Painter, FailureCarriesUserAndCause) {
  ScriptedMockBackend backend(Rules{{"", {"nope"}}});
  try {
    paint(sample_document(), backend);
    FAIL() << "expected PaintFailure";
  } catch (const PaintFailure& e) {
    EXPECT_EQ(e.user_id(), "u1");
    EXPECT_EQ(e.cause().attempts(), 10);
    EXPECT_EQ(e.cause().last_violations().at(0).kind, ViolationKind::missing_separator);
  }
}
