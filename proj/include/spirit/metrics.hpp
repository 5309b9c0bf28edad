#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "spirit/bank_store.hpp"
#include "spirit/survey.hpp"

namespace spirit {

struct EvaluationPair {
  std::string user_id;
  std::string question_id;
  int inferred = 0;
  int self_report = 0;
  bool ordinal = false;
  std::vector<int> scale_codes;  // substantive codes in scale order
  std::set<int> sentinel_codes;

  bool operator==(const EvaluationPair&) const = default;
};

class NonOrdinalError : public DataError {
 public:
  using DataError::DataError;
};

class MissingOrderError : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientDataError : public DataError {
 public:
  using DataError::DataError;
};

/// Joins simulated responses with self-reports on (user, question). Unmatched
/// rows on either side are skipped; codes must be legal for the question.
std::vector<EvaluationPair> make_pairs(std::span<const ResponseRecord> responses, std::span<const TruthRecord> truth,
                                       const SurveySpec& survey);

double exact_match_rate(std::span<const EvaluationPair> pairs);
/// Exact-match rate of one user's pairs; pairs must share a user id.
double user_accuracy(std::span<const EvaluationPair> pairs);
/// Per-user accuracy, keyed by user id.
std::map<std::string, double> accuracy_by_user(std::span<const EvaluationPair> pairs);
double macro_accuracy(std::span<const double> user_accuracies);

/// Share of pairs whose rank distance on scale_codes is exactly 1. Pairs
/// involving a sentinel code are skipped; non-ordinal pairs are an error.
double off_by_one_rate(std::span<const EvaluationPair> pairs);
/// Exact-match rate over the same pair set off_by_one_rate uses.
double ordinal_exact_rate(std::span<const EvaluationPair> pairs);

/// Question ids in survey sequence; position = index + 1.
struct QuestionOrder {
  std::vector<std::string> question_ids;
  std::map<std::string, std::set<int>> sentinels;

  static QuestionOrder from(const SurveySpec& survey);
  std::optional<std::size_t> position(std::string_view question_id) const;
};

struct CompositeScore {
  std::string user_id;
  double score = 0.0;
  std::size_t q_count = 0;

  bool operator==(const CompositeScore&) const = default;
};

/// Sum of q * y_q over sum of q, q the 1-based survey position; sentinel answers are left out.
CompositeScore position_weighted_composite(std::span<const ResponseRecord> user_responses, const QuestionOrder& order);
/// Same formula over raw (position, value) pairs.
double position_weighted_mean(std::span<const std::pair<std::size_t, int>> position_values);

/// Shannon entropy in bits of the empirical code distribution (sentinels count as codes).
double response_entropy(std::span<const int> values);
double response_entropy(std::span<const ResponseRecord> responses_to_one_question);

/// Share of records per level; always carries all three keys.
std::map<Confidence, double> confidence_histogram(std::span<const ResponseRecord> records);

struct LowConfidenceRow {
  std::string user_id;
  std::size_t low_confidence_count = 0;
  double accuracy = 0.0;

  bool operator==(const LowConfidenceRow&) const = default;
};

/// Users with at least one evaluation pair, sorted by id.
std::vector<LowConfidenceRow> low_conf_vs_accuracy(std::span<const ResponseRecord> records,
                                                   std::span<const EvaluationPair> pairs);

struct TraceQualityRow {
  std::string user_id;
  double log_char_count = 0.0;
  std::size_t low_conf_attribute_count = 0;
  double accuracy = 0.0;
  std::string platform;  // "reddit", "twitter" or "reddit+twitter"

  bool operator==(const TraceQualityRow&) const = default;
};

/// Bank entries that have an accuracy, in bank order.
std::vector<TraceQualityRow> trace_quality_table(std::span<const BankEntry> bank,
                                                 const std::map<std::string, double>& accuracy);

/// Ordinary least-squares slope of y on x; 0 when x has no spread.
double least_squares_slope(std::span<const double> x, std::span<const double> y);

struct QuantileSummary {
  std::size_t n = 0;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0, mean = 0.0;
};

QuantileSummary summarize(std::vector<double> values);

struct DiagnoseInput {
  const SurveySpec* survey = nullptr;
  std::span<const ResponseRecord> responses;
  std::optional<std::span<const TruthRecord>> truth;
  std::span<const BankEntry> bank;
};

/// Bundle: confidence histogram, entropy per question, composite quantiles,
/// and, when truth is supplied, accuracy, off-by-one and trace-quality slopes.
Json diagnose_report(const DiagnoseInput& in);
/// Flat "section,key,value" rows of the same report.
std::string diagnose_csv(const Json& report);

}  // namespace spirit
