#include <gtest/gtest.h>

#include <mutex>

#include "spirit/reasoner.hpp"
#include "spirit/synth_fixtures.hpp"
#include "test_support.hpp"

using namespace spirit;

namespace {

using Rules = std::vector<ScriptedMockBackend::Rule>;

SurveyQuestion yes_no() {
  SurveyQuestion q;
  q.question_id = "q1";
  q.wording = "Do you support the plan?";
  q.options = {{1, "Yes"}, {2, "No"}, {98, "Not sure"}};
  q.sentinel_codes = {98};
  return q;
}

bool has_kind(const std::vector<Violation>& vs, std::string_view path, ViolationKind k) {
  for (const auto& v : vs) {
    if (v.path == path && v.kind == k) return true;
  }
  return false;
}

// Shared event log for backend and search calls, so step order is observable.
class Recorder {
 public:
  void add(std::string e) {
    std::lock_guard lock(m_);
    events.push_back(std::move(e));
  }
  std::vector<std::string> events;

 private:
  std::mutex m_;
};

class RecordingBackend final : public ChatBackend {
 public:
  RecordingBackend(ChatBackend& inner, Recorder& log) : inner_(inner), log_(log) {}
  Completion complete(const ChatRequest& req) override {
    const auto& u = req.user_prompt;
    if (u.find("Before searching the web") != std::string::npos) {
      log_.add("preknowledge");
    } else if (u.find("Generate 3-5 web search queries") != std::string::npos) {
      log_.add("queries");
    } else if (u.find("Below are search results") != std::string::npos) {
      log_.add("summary");
    } else {
      log_.add("answer");
    }
    return inner_.complete(req);
  }
  std::string fingerprint() const override { return inner_.fingerprint(); }

 private:
  ChatBackend& inner_;
  Recorder& log_;
};

class RecordingSearch final : public SearchBackend {
 public:
  RecordingSearch(SearchBackend& inner, Recorder& log) : inner_(inner), log_(log) {}
  std::vector<SearchResult> search(const std::string& q, int k) override {
    log_.add("search");
    return inner_.search(q, k);
  }

 private:
  SearchBackend& inner_;
  Recorder& log_;
};

struct World {
  synth::Population pop = synth::gen_population(17, 12, 6);
  std::vector<BankEntry> entries = testkit::entries_for(pop);
  synth::MarkerMockBackend backend{pop.model, 17};
  FixtureSearch search{pop.search_fixture};
};

}  // namespace

TEST(ParseAnswer, AcceptsCodesAsIntOrNumericString) {
  auto q = yes_no();
  auto r = parse_answer(R"({"value": 1, "label": " yes ", "confidence": "high", "reason": "r"})", q,
                        Protocol::direct, "u");
  ASSERT_TRUE(r.ok()) << describe(r.violations);
  EXPECT_EQ(r.value->value, 1);
  EXPECT_EQ(r.value->label, "Yes");
  EXPECT_EQ(r.value->confidence, Confidence::high);
  EXPECT_FALSE(r.value->influenced_by_search);
  EXPECT_TRUE(parse_answer(R"({"value": "98", "label": "Not sure", "confidence": "low", "reason": "r"})", q,
                           Protocol::direct, "u")
                  .ok());
}

TEST(ParseAnswer, RejectsEachKindOfDefect) {
  auto q = yes_no();
  auto kinds = [&](std::string_view text, Protocol p = Protocol::direct) {
    return parse_answer(text, q, p, "u").violations;
  };
  EXPECT_TRUE(has_kind(kinds(R"({"value": 3, "label": "x", "confidence": "low", "reason": "r"})"), "value",
                       ViolationKind::invalid_code));
  EXPECT_TRUE(has_kind(kinds(R"({"value": 1.5, "label": "Yes", "confidence": "low", "reason": "r"})"), "value",
                       ViolationKind::wrong_type));
  EXPECT_TRUE(has_kind(kinds(R"({"value": 1, "label": "No", "confidence": "low", "reason": "r"})"), "label",
                       ViolationKind::label_mismatch));
  EXPECT_TRUE(has_kind(kinds(R"({"value": 1, "label": "Yes", "confidence": "sure", "reason": "r"})"), "confidence",
                       ViolationKind::bad_enum));
  EXPECT_TRUE(has_kind(kinds(R"({"value": 1, "label": "Yes", "confidence": "low", "reason": " "})"), "reason",
                       ViolationKind::empty_value));
  EXPECT_TRUE(has_kind(kinds(R"({"value": 1, "label": "Yes", "confidence": "low", "reason": "r", "x": 1})"), "x",
                       ViolationKind::unknown_key));
  EXPECT_TRUE(has_kind(kinds(R"({"value": 1, "label": "Yes", "confidence": "low"})"), "reason",
                       ViolationKind::missing_key));
  EXPECT_TRUE(has_kind(kinds("Yes."), "", ViolationKind::parse_error));
  EXPECT_TRUE(has_kind(kinds(R"({"value": 1, "label": "Yes", "confidence": "low", "reason": "r"})", Protocol::timely),
                       "influenced_by_search", ViolationKind::missing_key));
  EXPECT_TRUE(has_kind(kinds(R"({"value": 1, "label": "Yes", "confidence": "low", "reason": "r",
                               "influenced_by_search": "yes"})",
                             Protocol::timely),
                       "influenced_by_search", ViolationKind::wrong_type));
  EXPECT_TRUE(has_kind(kinds(R"({"value": 1, "label": "Yes", "confidence": "low", "reason": "r",
                               "influenced_by_search": false})"),
                       "influenced_by_search", ViolationKind::unknown_key));
}

TEST(ReasonerPrompts, DirectPromptCarriesPersonaQuestionAndOptions) {
  World w;
  const auto& e = w.entries[0];
  const auto& q = w.pop.model.survey.questions[0];
  auto req = render_direct_prompt(e, q);
  EXPECT_NE(req.user_prompt.find(persona_json_text(e.profile)), std::string::npos);
  EXPECT_NE(req.user_prompt.find(e.profile.narrative), std::string::npos);
  EXPECT_NE(req.user_prompt.find(q.wording), std::string::npos);
  EXPECT_NE(req.user_prompt.find(q.options_list()), std::string::npos);
  EXPECT_NE(req.user_prompt.find(render_demographics(*e.demographics)), std::string::npos);

  ReasonerOptions hidden;
  hidden.include_demographics = false;
  auto bare = render_direct_prompt(e, q, hidden);
  EXPECT_EQ(bare.user_prompt.find(render_demographics(*e.demographics)), std::string::npos);
  EXPECT_NE(bare.user_prompt.find("(not provided)"), std::string::npos);
}

TEST(ReasonerPrompts, BaselinePromptHasNoPersonality) {
  World w;
  auto req = render_baseline_prompt(*w.entries[0].demographics, w.pop.model.survey.questions[0]);
  EXPECT_EQ(req.user_prompt.find("personality_big5"), std::string::npos);
  EXPECT_NE(req.user_prompt.find("political_ideology"), std::string::npos);
}

TEST(ReasonerPrompts, SearchResultsRendering) {
  std::vector<SearchResult> rs = {{"T1", "S1", "http://a"}, {"T2", "S2", "http://b"}};
  EXPECT_EQ(render_search_results(rs), "[1] T1\nS1\nhttp://a\n\n[2] T2\nS2\nhttp://b");
  EXPECT_EQ(render_search_results({}), "");
}

TEST(Reasoner, DirectAnswersRecoverPlantedCodes) {
  World w;
  for (const auto& e : w.entries) {
    const auto& t = w.pop.traits.at(e.user_id);
    for (const auto& q : w.pop.model.survey.questions) {
      auto a = answer_direct(e, q, w.backend);
      EXPECT_EQ(a.record.value, w.pop.model.answer(q.question_id, synth::class_of(t)));
      EXPECT_EQ(a.receipt.attempts, 1);
    }
  }
}

TEST(Reasoner, StepSchemas) {
  EXPECT_TRUE(parse_preknowledge(R"({"knowledge_level":"minimal","what_i_know":"a","where_i_heard_it":"b",
                                   "prior_impression":"c"})")
                  .ok());
  EXPECT_TRUE(has_kind(parse_preknowledge(R"({"knowledge_level":"lots","what_i_know":"a","where_i_heard_it":"b",
                                            "prior_impression":"c"})")
                           .violations,
                       "knowledge_level", ViolationKind::bad_enum));
  EXPECT_TRUE(parse_queries(R"({"queries":["a","b","c"]})").ok());
  EXPECT_FALSE(parse_queries(R"({"queries":["a","b"]})").ok());
  EXPECT_FALSE(parse_queries(R"({"queries":["a","b","c","d","e","f"]})").ok());
  EXPECT_FALSE(parse_queries(R"({"queries":["a","","c"]})").ok());
}

TEST(Reasoner, TimelyStepsRunInOrderAndFetchTopFive) {
  World w;
  Recorder log;
  RecordingBackend backend(w.backend, log);
  RecordingSearch search(w.search, log);
  const auto& e = w.entries[0];
  auto trace = acquire_context(e, w.pop.model.survey.topic, backend, search);
  const auto nq = trace.queries().size();
  ASSERT_GE(nq, 3u);
  ASSERT_LE(nq, 5u);
  std::vector<std::string> expected = {"preknowledge", "queries"};
  expected.insert(expected.end(), nq, "search");
  expected.push_back("summary");
  EXPECT_EQ(log.events, expected);
  EXPECT_EQ(trace.results().size(), nq * 5);
  EXPECT_EQ(trace.receipts().size(), 3u);

  const auto& q = w.pop.model.survey.questions[1];
  auto a = answer_timely(e, q, trace, backend);
  ASSERT_TRUE(a.record.influenced_by_search.has_value());
  EXPECT_EQ(a.record.protocol, Protocol::timely);
  auto req = render_timely_prompt(e, q, trace);
  EXPECT_NE(req.user_prompt.find(trace.summary().updated_impression), std::string::npos);
  EXPECT_THROW(answer_timely(w.entries[1], q, trace, backend), UsageError);
}

TEST(RunSurvey, ResultIndependentOfJobs) {
  World w;
  for (auto proto : {Protocol::direct, Protocol::timely, Protocol::demographic_baseline}) {
    SurveyRunOptions one{proto, {}, 1, &w.search};
    SurveyRunOptions four{proto, {}, 4, &w.search};
    auto a = run_survey(w.entries, w.pop.model.survey, w.backend, one);
    auto b = run_survey(w.entries, w.pop.model.survey, w.backend, four);
    EXPECT_EQ(to_jsonl(a.responses), to_jsonl(b.responses)) << to_string(proto);
    EXPECT_EQ(a.responses.size(), w.entries.size() * w.pop.model.survey.questions.size());
    EXPECT_TRUE(a.failures.empty());
    EXPECT_EQ(a.attempts, b.attempts);
  }
}

TEST(RunSurvey, TimelyBuildsOneTracePerUserTopic) {
  World w;
  InstrumentedSearch search(w.search);
  SurveyRunOptions opts{Protocol::timely, {}, 2, &search};
  auto r = run_survey(w.entries, w.pop.model.survey, w.backend, opts);
  EXPECT_EQ(r.traces, w.entries.size());
  for (const auto& rec : r.responses) EXPECT_TRUE(rec.influenced_by_search.has_value());
  EXPECT_EQ(search.results(), 5 * search.calls());
}

TEST(RunSurvey, MisuseAndMissingDemographics) {
  World w;
  SurveyRunOptions timely{Protocol::timely, {}, 1, nullptr};
  EXPECT_THROW(run_survey(w.entries, w.pop.model.survey, w.backend, timely), UsageError);

  auto entries = w.entries;
  entries[0].demographics.reset();
  SurveyRunOptions base{Protocol::demographic_baseline, {}, 1, nullptr};
  auto r = run_survey(entries, w.pop.model.survey, w.backend, base);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].user_id, entries[0].user_id);
  EXPECT_EQ(r.failures[0].stage, "demographics");
}

TEST(RunSurvey, AnswerFailuresAreRecordedNotThrown) {
  World w;
  ScriptedMockBackend junk(Rules{{"", {"I would say yes."}}});
  SurveyRunOptions opts;
  auto r = run_survey(std::span(w.entries).first(2), w.pop.model.survey, junk, opts);
  EXPECT_TRUE(r.responses.empty());
  ASSERT_EQ(r.failures.size(), 2 * w.pop.model.survey.questions.size());
  EXPECT_EQ(r.failures[0].attempts, 10);
  EXPECT_EQ(r.failures[0].stage, "answer");
}
