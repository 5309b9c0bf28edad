#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spirit/bank_store.hpp"
#include "spirit/llm_gateway.hpp"
#include "spirit/search.hpp"
#include "spirit/survey.hpp"

namespace spirit {

struct ReasonerOptions {
  /// Whether the demographics block carries the entry's demographics or "(not provided)".
  bool include_demographics = true;
  double temperature = 0.7;
  RetryPolicy policy;
  int search_top_k = 5;
};

/// Validates a survey answer against the question: closed keys, a legal code
/// (integer or numeric string), the code's label (case and surrounding space
/// ignored), confidence, non-empty reason, and for timely answers the
/// influenced_by_search flag. The record label is the canonical option label.
Validated<ResponseRecord> parse_answer(std::string_view text, const SurveyQuestion& q, Protocol protocol,
                                       std::string_view user_id);

class AnswerFailure : public BackendError {
 public:
  AnswerFailure(std::string user_id, std::string question_id, const StructuredFailure& cause);
  const std::string& user_id() const { return user_id_; }
  const std::string& question_id() const { return question_id_; }
  const StructuredFailure& cause() const { return cause_; }

 private:
  std::string user_id_;
  std::string question_id_;
  StructuredFailure cause_;
};

std::string persona_json_text(const PersonaProfile& p);
std::string demographics_block(const std::optional<DemographicPersona>& d, bool include);

ChatRequest render_direct_prompt(const BankEntry& entry, const SurveyQuestion& q, const ReasonerOptions& opts = {});
/// Persona block holds the seven demographics only; the narrative slot is empty.
ChatRequest render_baseline_prompt(const DemographicPersona& demo, const SurveyQuestion& q,
                                   const ReasonerOptions& opts = {});

struct Answer {
  ResponseRecord record;
  GenerationReceipt receipt;
};

Answer answer_direct(const BankEntry& entry, const SurveyQuestion& q, ChatBackend& backend,
                     const ReasonerOptions& opts = {});
Answer answer_demographic_baseline(std::string_view user_id, const DemographicPersona& demo,
                                   const SurveyQuestion& q, ChatBackend& backend, const ReasonerOptions& opts = {});

struct Preknowledge {
  std::string knowledge_level;  // none | minimal | moderate | extensive
  std::string what_i_know;
  std::string where_i_heard_it;
  std::string prior_impression;

  bool operator==(const Preknowledge&) const = default;
};

struct SearchSummary {
  std::vector<std::string> key_points;
  std::string timeframe;
  std::string source_fit;
  std::string updated_impression;

  bool operator==(const SearchSummary&) const = default;
};

Json to_json(const Preknowledge& p);
Json to_json(const SearchSummary& s);

Validated<Preknowledge> parse_preknowledge(std::string_view text);
/// 3 to 5 non-empty queries.
Validated<std::vector<std::string>> parse_queries(std::string_view text);
Validated<SearchSummary> parse_summary(std::string_view text);

/// "[1] title\nsnippet\nurl" blocks separated by blank lines; empty for no results.
std::string render_search_results(std::span<const SearchResult> results);

class AcquisitionTrace;

/// Runs pre-knowledge, query generation, search (top_k per query) and
/// summarization in that order. Any step's StructuredFailure aborts the trace.
AcquisitionTrace acquire_context(const BankEntry& entry, const std::string& topic, ChatBackend& backend,
                                 SearchBackend& search, const ReasonerOptions& opts = {});

/// Only acquire_context can build one, so a timely answer always follows a completed acquisition.
class AcquisitionTrace {
 public:
  const std::string& user_id() const { return user_id_; }
  const std::string& topic() const { return topic_; }
  const Preknowledge& preknowledge() const { return preknowledge_; }
  const std::vector<std::string>& queries() const { return queries_; }
  const std::vector<SearchResult>& results() const { return results_; }
  const SearchSummary& summary() const { return summary_; }
  const std::vector<GenerationReceipt>& receipts() const { return receipts_; }

 private:
  AcquisitionTrace() = default;
  friend AcquisitionTrace acquire_context(const BankEntry&, const std::string&, ChatBackend&, SearchBackend&,
                                          const ReasonerOptions&);

  std::string user_id_;
  std::string topic_;
  Preknowledge preknowledge_;
  std::vector<std::string> queries_;
  std::vector<SearchResult> results_;
  SearchSummary summary_;
  std::vector<GenerationReceipt> receipts_;
};

Json to_json(const AcquisitionTrace& t);

ChatRequest render_timely_prompt(const BankEntry& entry, const SurveyQuestion& q, const AcquisitionTrace& trace,
                                 const ReasonerOptions& opts = {});

/// Throws UsageError when the trace belongs to another user.
Answer answer_timely(const BankEntry& entry, const SurveyQuestion& q, const AcquisitionTrace& trace,
                     ChatBackend& backend, const ReasonerOptions& opts = {});

struct SurveyFailure {
  std::string user_id;
  std::string question_id;  // empty when a whole topic or user failed
  std::string stage;        // answer | acquire | demographics
  int attempts = 0;
  std::string message;
  std::vector<Violation> violations;
};

Json to_json(const SurveyFailure& f);

struct SurveyRunOptions {
  Protocol protocol = Protocol::direct;
  ReasonerOptions reasoner;
  int jobs = 1;
  SearchBackend* search = nullptr;  // required for timely
};

struct SurveyRunResult {
  std::vector<ResponseRecord> responses;  // bank order, then survey question order
  std::vector<SurveyFailure> failures;
  std::size_t attempts = 0;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::size_t traces = 0;
};

/// Fields the survey for every entry; users run in parallel (`jobs`) and the
/// outcome does not depend on the thread count. Timely runs build one trace
/// per (user, topic) and reuse it for that topic's questions.
SurveyRunResult run_survey(std::span<const BankEntry> entries, const SurveySpec& survey, ChatBackend& backend,
                           const SurveyRunOptions& opts);

}  // namespace spirit
