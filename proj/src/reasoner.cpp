#include "spirit/reasoner.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>

#include <fmt/format.h>

#include "spirit/prompts.hpp"

namespace spirit {

namespace {

std::string fold(std::string_view s) {
  std::string out(trim(s));
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::optional<int> parse_code(const Json& v) {
  if (v.is_number_integer()) {
    auto n = v.get<std::int64_t>();
    if (n < INT32_MIN || n > INT32_MAX) return std::nullopt;
    return static_cast<int>(n);
  }
  if (v.is_string()) {
    auto s = trim(v.get_ref<const std::string&>());
    int out = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec == std::errc() && ptr == s.data() + s.size() && !s.empty()) return out;
  }
  return std::nullopt;
}

/// Parses text into an object and flags keys outside `allowed`.
struct ObjectCheck {
  std::optional<Json> doc;
  std::vector<Violation> violations;

  ObjectCheck(std::string_view text, std::initializer_list<std::string_view> allowed) {
    auto parsed = parse_json(strip_code_fence(text));
    if (!parsed) {
      violations.push_back({"", ViolationKind::parse_error, "output is not valid JSON"});
      return;
    }
    if (!parsed->is_object()) {
      violations.push_back({"", ViolationKind::not_an_object, "expected a JSON object"});
      return;
    }
    for (const auto& [k, v] : parsed->items()) {
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
        violations.push_back({k, ViolationKind::unknown_key, {}});
      }
    }
    doc = std::move(parsed);
  }

  const Json* field(std::string_view key) {
    auto it = doc->find(std::string(key));
    if (it == doc->end()) {
      violations.push_back({std::string(key), ViolationKind::missing_key, {}});
      return nullptr;
    }
    return &*it;
  }

  std::optional<std::string> text(std::string_view key, bool required_nonempty = true) {
    const Json* v = field(key);
    if (!v) return std::nullopt;
    if (!v->is_string()) {
      violations.push_back({std::string(key), ViolationKind::wrong_type, "expected a string"});
      return std::nullopt;
    }
    auto s = std::string(trim(v->get_ref<const std::string&>()));
    if (required_nonempty && s.empty()) {
      violations.push_back({std::string(key), ViolationKind::empty_value, {}});
      return std::nullopt;
    }
    return s;
  }
};

}  // namespace

Validated<ResponseRecord> parse_answer(std::string_view text, const SurveyQuestion& q, Protocol protocol,
                                       std::string_view user_id) {
  const bool timely = protocol == Protocol::timely;
  ObjectCheck c(text, timely ? std::initializer_list<std::string_view>{"value", "label", "confidence", "reason",
                                                                       "influenced_by_search"}
                             : std::initializer_list<std::string_view>{"value", "label", "confidence", "reason"});
  if (!c.doc) return Validated<ResponseRecord>::failure(std::move(c.violations));

  ResponseRecord r;
  r.user_id = std::string(user_id);
  r.question_id = q.question_id;
  r.protocol = protocol;

  const ResponseOption* option = nullptr;
  if (const Json* v = c.field("value")) {
    auto code = parse_code(*v);
    if (!code) {
      c.violations.push_back({"value", ViolationKind::wrong_type, "expected an integer option code"});
    } else if (option = q.find(*code); option == nullptr) {
      c.violations.push_back({"value", ViolationKind::invalid_code, fmt::format("{} is not an option code", *code)});
    } else {
      r.value = *code;
      r.label = option->label;
    }
  }
  if (auto label = c.text("label")) {
    if (option && fold(*label) != fold(option->label)) {
      c.violations.push_back({"label", ViolationKind::label_mismatch,
                              fmt::format("'{}' does not match option {} '{}'", *label, option->code, option->label)});
    }
  }
  if (auto conf = c.text("confidence")) {
    if (auto parsed = parse_confidence(fold(*conf))) {
      r.confidence = *parsed;
    } else {
      c.violations.push_back({"confidence", ViolationKind::bad_enum, *conf});
    }
  }
  if (auto reason = c.text("reason")) r.reason = *reason;
  if (timely) {
    if (const Json* v = c.field("influenced_by_search")) {
      if (v->is_boolean()) {
        r.influenced_by_search = v->get<bool>();
      } else {
        c.violations.push_back({"influenced_by_search", ViolationKind::wrong_type, "expected true or false"});
      }
    }
  }
  if (!c.violations.empty()) return Validated<ResponseRecord>::failure(std::move(c.violations));
  return Validated<ResponseRecord>::success(std::move(r));
}

AnswerFailure::AnswerFailure(std::string user_id, std::string question_id, const StructuredFailure& cause)
    : BackendError(fmt::format("answer {}/{}: {}", user_id, question_id, cause.what())),
      user_id_(std::move(user_id)),
      question_id_(std::move(question_id)),
      cause_(cause) {}

std::string persona_json_text(const PersonaProfile& p) { return to_json(p).dump(2); }

std::string demographics_block(const std::optional<DemographicPersona>& d, bool include) {
  if (!include || !d) return "(not provided)";
  auto text = render_demographics(*d);
  while (!text.empty() && text.back() == '\n') text.pop_back();
  return text;
}

namespace {

ChatRequest reasoner_request(std::string user_prompt, const ReasonerOptions& opts, std::string tag) {
  ChatRequest req;
  req.system_prompt = std::string(prompts::reasoner_system());
  req.user_prompt = std::move(user_prompt);
  req.temperature = opts.temperature;
  req.max_output = 1024;
  req.tag = std::move(tag);
  return req;
}

Answer answer_with(const ChatRequest& req, const SurveyQuestion& q, Protocol protocol, std::string_view user_id,
                   ChatBackend& backend, const ReasonerOptions& opts) {
  Validator<ResponseRecord> validate = [&](std::string_view text) { return parse_answer(text, q, protocol, user_id); };
  try {
    auto r = complete_structured(req, backend, validate, opts.policy);
    return Answer{std::move(r.value), std::move(r.receipt)};
  } catch (const StructuredFailure& f) {
    throw AnswerFailure(std::string(user_id), q.question_id, f);
  }
}

}  // namespace

ChatRequest render_direct_prompt(const BankEntry& entry, const SurveyQuestion& q, const ReasonerOptions& opts) {
  auto persona = persona_json_text(entry.profile);
  auto demo = demographics_block(entry.demographics, opts.include_demographics);
  auto options = q.options_list();
  auto user = prompts::render(prompts::direct_answer(), {{"persona_json", persona},
                                                         {"persona_narrative", entry.profile.narrative},
                                                         {"demographics", demo},
                                                         {"question_text", q.wording},
                                                         {"options_list", options}});
  return reasoner_request(std::move(user), opts, fmt::format("direct:{}:{}", entry.user_id, q.question_id));
}

ChatRequest render_baseline_prompt(const DemographicPersona& demo, const SurveyQuestion& q,
                                   const ReasonerOptions& opts) {
  auto persona = to_json(demo).dump(2);
  auto block = demographics_block(demo, true);
  auto options = q.options_list();
  auto user = prompts::render(prompts::direct_answer(), {{"persona_json", persona},
                                                         {"persona_narrative", block},
                                                         {"demographics", block},
                                                         {"question_text", q.wording},
                                                         {"options_list", options}});
  return reasoner_request(std::move(user), opts, fmt::format("baseline:{}", q.question_id));
}

Answer answer_direct(const BankEntry& entry, const SurveyQuestion& q, ChatBackend& backend,
                     const ReasonerOptions& opts) {
  return answer_with(render_direct_prompt(entry, q, opts), q, Protocol::direct, entry.user_id, backend, opts);
}

Answer answer_demographic_baseline(std::string_view user_id, const DemographicPersona& demo, const SurveyQuestion& q,
                                   ChatBackend& backend, const ReasonerOptions& opts) {
  return answer_with(render_baseline_prompt(demo, q, opts), q, Protocol::demographic_baseline, user_id, backend,
                     opts);
}

Json to_json(const Preknowledge& p) {
  Json j = Json::object();
  j["knowledge_level"] = p.knowledge_level;
  j["what_i_know"] = p.what_i_know;
  j["where_i_heard_it"] = p.where_i_heard_it;
  j["prior_impression"] = p.prior_impression;
  return j;
}

Json to_json(const SearchSummary& s) {
  Json j = Json::object();
  j["key_points"] = s.key_points;
  j["timeframe"] = s.timeframe;
  j["source_fit"] = s.source_fit;
  j["updated_impression"] = s.updated_impression;
  return j;
}

Validated<Preknowledge> parse_preknowledge(std::string_view text) {
  ObjectCheck c(text, {"knowledge_level", "what_i_know", "where_i_heard_it", "prior_impression"});
  if (!c.doc) return Validated<Preknowledge>::failure(std::move(c.violations));
  Preknowledge p;
  if (auto level = c.text("knowledge_level")) {
    static constexpr std::array<std::string_view, 4> kLevels = {"none", "minimal", "moderate", "extensive"};
    if (std::find(kLevels.begin(), kLevels.end(), *level) == kLevels.end()) {
      c.violations.push_back({"knowledge_level", ViolationKind::bad_enum, *level});
    } else {
      p.knowledge_level = *level;
    }
  }
  if (auto s = c.text("what_i_know")) p.what_i_know = *s;
  if (auto s = c.text("where_i_heard_it")) p.where_i_heard_it = *s;
  if (auto s = c.text("prior_impression")) p.prior_impression = *s;
  if (!c.violations.empty()) return Validated<Preknowledge>::failure(std::move(c.violations));
  return Validated<Preknowledge>::success(std::move(p));
}

Validated<std::vector<std::string>> parse_queries(std::string_view text) {
  using Out = Validated<std::vector<std::string>>;
  ObjectCheck c(text, {"queries"});
  if (!c.doc) return Out::failure(std::move(c.violations));
  const Json* qs = c.field("queries");
  if (!qs) return Out::failure(std::move(c.violations));
  if (!qs->is_array()) {
    c.violations.push_back({"queries", ViolationKind::wrong_type, "expected a list"});
    return Out::failure(std::move(c.violations));
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < qs->size(); ++i) {
    const auto& q = (*qs)[i];
    auto path = fmt::format("queries[{}]", i);
    if (!q.is_string()) {
      c.violations.push_back({path, ViolationKind::wrong_type, "expected a string"});
    } else if (auto s = trim(q.get_ref<const std::string&>()); s.empty()) {
      c.violations.push_back({path, ViolationKind::empty_value, {}});
    } else {
      out.emplace_back(s);
    }
  }
  if (qs->size() < 3 || qs->size() > 5) {
    c.violations.push_back({"queries", ViolationKind::cardinality, fmt::format("{} queries, expected 3-5", qs->size())});
  }
  if (!c.violations.empty()) return Out::failure(std::move(c.violations));
  return Out::success(std::move(out));
}

Validated<SearchSummary> parse_summary(std::string_view text) {
  ObjectCheck c(text, {"key_points", "timeframe", "source_fit", "updated_impression"});
  if (!c.doc) return Validated<SearchSummary>::failure(std::move(c.violations));
  SearchSummary s;
  if (const Json* kp = c.field("key_points")) {
    if (!kp->is_array()) {
      c.violations.push_back({"key_points", ViolationKind::wrong_type, "expected a list"});
    } else {
      for (std::size_t i = 0; i < kp->size(); ++i) {
        const auto& item = (*kp)[i];
        if (!item.is_string()) {
          c.violations.push_back({fmt::format("key_points[{}]", i), ViolationKind::wrong_type, "expected a string"});
        } else {
          s.key_points.push_back(item.get<std::string>());
        }
      }
    }
  }
  if (auto t = c.text("timeframe", false)) s.timeframe = *t;
  if (auto t = c.text("source_fit")) s.source_fit = *t;
  if (auto t = c.text("updated_impression")) s.updated_impression = *t;
  if (!c.violations.empty()) return Validated<SearchSummary>::failure(std::move(c.violations));
  return Validated<SearchSummary>::success(std::move(s));
}

std::string render_search_results(std::span<const SearchResult> results) {
  std::string out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (i) out += "\n\n";
    out += fmt::format("[{}] {}\n{}\n{}", i + 1, results[i].title, results[i].snippet, results[i].url);
  }
  return out;
}

AcquisitionTrace acquire_context(const BankEntry& entry, const std::string& topic, ChatBackend& backend,
                                 SearchBackend& search, const ReasonerOptions& opts) {
  AcquisitionTrace t;
  t.user_id_ = entry.user_id;
  t.topic_ = topic;
  auto persona = persona_json_text(entry.profile);
  auto demo = demographics_block(entry.demographics, opts.include_demographics);
  const auto& narrative = entry.profile.narrative;

  auto pre_req = reasoner_request(
      prompts::render(prompts::timely_preknowledge(),
                      {{"persona_json", persona}, {"persona_narrative", narrative}, {"demographics", demo},
                       {"topic_name", topic}}),
      opts, fmt::format("preknowledge:{}:{}", entry.user_id, topic));
  auto pre = complete_structured<Preknowledge>(pre_req, backend, parse_preknowledge, opts.policy);
  t.preknowledge_ = std::move(pre.value);
  t.receipts_.push_back(std::move(pre.receipt));

  auto q_req = reasoner_request(
      prompts::render(prompts::timely_queries(),
                      {{"persona_json", persona}, {"persona_narrative", narrative}, {"topic_name", topic}}),
      opts, fmt::format("queries:{}:{}", entry.user_id, topic));
  auto queries = complete_structured<std::vector<std::string>>(q_req, backend, parse_queries, opts.policy);
  t.queries_ = std::move(queries.value);
  t.receipts_.push_back(std::move(queries.receipt));

  for (const auto& query : t.queries_) {
    auto found = search.search(query, opts.search_top_k);
    t.results_.insert(t.results_.end(), found.begin(), found.end());
  }

  auto results_text = render_search_results(t.results_);
  auto s_req = reasoner_request(
      prompts::render(prompts::timely_summary(),
                      {{"persona_json", persona}, {"persona_narrative", narrative}, {"search_results", results_text}}),
      opts, fmt::format("summary:{}:{}", entry.user_id, topic));
  auto summary = complete_structured<SearchSummary>(s_req, backend, parse_summary, opts.policy);
  t.summary_ = std::move(summary.value);
  t.receipts_.push_back(std::move(summary.receipt));
  return t;
}

Json to_json(const AcquisitionTrace& t) {
  Json results = Json::array();
  for (const auto& r : t.results()) results.push_back(to_json(r));
  Json j = Json::object();
  j["user_id"] = t.user_id();
  j["topic"] = t.topic();
  j["preknowledge"] = to_json(t.preknowledge());
  j["queries"] = t.queries();
  j["results"] = std::move(results);
  j["search_summary"] = to_json(t.summary());
  return j;
}

ChatRequest render_timely_prompt(const BankEntry& entry, const SurveyQuestion& q, const AcquisitionTrace& trace,
                                 const ReasonerOptions& opts) {
  auto persona = persona_json_text(entry.profile);
  auto demo = demographics_block(entry.demographics, opts.include_demographics);
  auto pre = to_json(trace.preknowledge()).dump(2);
  auto summary = to_json(trace.summary()).dump(2);
  auto options = q.options_list();
  auto user = prompts::render(prompts::timely_answer(), {{"persona_json", persona},
                                                         {"persona_narrative", entry.profile.narrative},
                                                         {"demographics", demo},
                                                         {"preknowledge_json", pre},
                                                         {"search_summary_json", summary},
                                                         {"question_text", q.wording},
                                                         {"options_list", options}});
  return reasoner_request(std::move(user), opts, fmt::format("timely:{}:{}", entry.user_id, q.question_id));
}

Answer answer_timely(const BankEntry& entry, const SurveyQuestion& q, const AcquisitionTrace& trace,
                     ChatBackend& backend, const ReasonerOptions& opts) {
  if (trace.user_id() != entry.user_id) {
    throw UsageError(fmt::format("trace for '{}' used to answer for '{}'", trace.user_id(), entry.user_id));
  }
  return answer_with(render_timely_prompt(entry, q, trace, opts), q, Protocol::timely, entry.user_id, backend, opts);
}

Json to_json(const SurveyFailure& f) {
  Json vs = Json::array();
  for (const auto& v : f.violations) {
    vs.push_back(Json{{"path", v.path}, {"kind", std::string(to_string(v.kind))}, {"detail", v.detail}});
  }
  Json j = Json::object();
  j["user_id"] = f.user_id;
  j["question_id"] = f.question_id;
  j["stage"] = f.stage;
  j["attempts"] = f.attempts;
  j["message"] = f.message;
  j["violations"] = std::move(vs);
  return j;
}

namespace {

struct UserOutcome {
  std::vector<ResponseRecord> responses;
  std::vector<SurveyFailure> failures;
  std::size_t attempts = 0;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::size_t traces = 0;

  void add(const GenerationReceipt& r) {
    attempts += static_cast<std::size_t>(r.attempts);
    input_tokens += r.input_tokens;
    output_tokens += r.output_tokens;
  }
  void fail(const std::string& user, const std::string& question, std::string stage, const std::exception& e) {
    SurveyFailure f{user, question, std::move(stage), 0, e.what(), {}};
    if (auto* a = dynamic_cast<const AnswerFailure*>(&e)) {
      f.attempts = a->cause().attempts();
      f.violations = a->cause().last_violations();
      attempts += static_cast<std::size_t>(f.attempts);
      input_tokens += a->cause().input_tokens();
      output_tokens += a->cause().output_tokens();
    } else if (auto* s = dynamic_cast<const StructuredFailure*>(&e)) {
      f.attempts = s->attempts();
      f.violations = s->last_violations();
      attempts += static_cast<std::size_t>(f.attempts);
      input_tokens += s->input_tokens();
      output_tokens += s->output_tokens();
    }
    failures.push_back(std::move(f));
  }
};

// Answers one question, turning backend-side failures into failure rows.
template <class Fn>
void guarded(UserOutcome& out, const std::string& user, const std::string& question, Fn&& fn) {
  try {
    auto a = fn();
    out.add(a.receipt);
    out.responses.push_back(std::move(a.record));
  } catch (const BackendError& e) {
    out.fail(user, question, "answer", e);
  }
}

UserOutcome survey_user(const BankEntry& entry, const SurveySpec& survey, ChatBackend& backend,
                        const SurveyRunOptions& opts) {
  UserOutcome out;
  const auto& user = entry.user_id;
  switch (opts.protocol) {
    case Protocol::direct:
      for (const auto& q : survey.questions) {
        guarded(out, user, q.question_id, [&] { return answer_direct(entry, q, backend, opts.reasoner); });
      }
      break;
    case Protocol::demographic_baseline:
      if (!entry.demographics) {
        out.failures.push_back({user, "", "demographics", 0, "entry has no demographics", {}});
        break;
      }
      for (const auto& q : survey.questions) {
        guarded(out, user, q.question_id,
                [&] { return answer_demographic_baseline(user, *entry.demographics, q, backend, opts.reasoner); });
      }
      break;
    case Protocol::timely: {
      std::map<std::string, std::optional<AcquisitionTrace>> traces;
      for (const auto& q : survey.questions) {
        auto topic = survey.topic_of(q);
        auto it = traces.find(topic);
        if (it == traces.end()) {
          std::optional<AcquisitionTrace> t;
          try {
            t = acquire_context(entry, topic, backend, *opts.search, opts.reasoner);
            for (const auto& r : t->receipts()) out.add(r);
            ++out.traces;
          } catch (const BackendError& e) {
            out.fail(user, "", "acquire", e);
          }
          it = traces.emplace(topic, std::move(t)).first;
        }
        if (!it->second) continue;
        guarded(out, user, q.question_id,
                [&] { return answer_timely(entry, q, *it->second, backend, opts.reasoner); });
      }
      break;
    }
  }
  return out;
}

}  // namespace

SurveyRunResult run_survey(std::span<const BankEntry> entries, const SurveySpec& survey, ChatBackend& backend,
                           const SurveyRunOptions& opts) {
  if (opts.protocol == Protocol::timely && opts.search == nullptr) {
    throw UsageError("timely protocol needs a search backend");
  }
  check_survey(survey);
  std::vector<std::optional<UserOutcome>> slots(entries.size());
  std::vector<std::string> fatal(entries.size());
  const auto n = static_cast<std::ptrdiff_t>(entries.size());
  const int jobs = std::max(1, opts.jobs);

#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      slots[i] = survey_user(entries[i], survey, backend, opts);
    } catch (const std::exception& e) {
      fatal[i] = e.what();
    }
  }

  SurveyRunResult result;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!slots[i]) {
      result.failures.push_back({entries[i].user_id, "", "user", 0, fatal[i], {}});
      continue;
    }
    auto& o = *slots[i];
    result.responses.insert(result.responses.end(), std::make_move_iterator(o.responses.begin()),
                            std::make_move_iterator(o.responses.end()));
    result.failures.insert(result.failures.end(), std::make_move_iterator(o.failures.begin()),
                           std::make_move_iterator(o.failures.end()));
    result.attempts += o.attempts;
    result.input_tokens += o.input_tokens;
    result.output_tokens += o.output_tokens;
    result.traces += o.traces;
  }
  return result;
}

}  // namespace spirit
