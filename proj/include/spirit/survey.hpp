#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "spirit/common.hpp"
#include "spirit/persona_schema.hpp"

namespace spirit {

struct ResponseOption {
  int code = 0;
  std::string label;

  bool operator==(const ResponseOption&) const = default;
};

struct SurveyQuestion {
  std::string question_id;
  std::string wording;
  std::vector<ResponseOption> options;  // ordinal questions list substantive codes in scale order
  bool ordinal = false;
  std::set<int> sentinel_codes;         // e.g. 98 "Not sure", 99 "Refused"
  std::string topic;                    // optional; timely runs group questions by topic

  bool operator==(const SurveyQuestion&) const = default;

  const ResponseOption* find(int code) const;
  bool is_sentinel(int code) const { return sentinel_codes.contains(code); }
  /// Substantive codes in option order.
  std::vector<int> scale_codes() const;
  /// "(1) Yes\n(2) No\n(98) Not sure"
  std::string options_list() const;
};

struct SurveySpec {
  std::string survey_id;
  std::string title;
  std::string topic;  // default topic for questions that carry none
  std::vector<SurveyQuestion> questions;

  bool operator==(const SurveySpec&) const = default;

  const SurveyQuestion* find(std::string_view question_id) const;
  std::string topic_of(const SurveyQuestion& q) const { return q.topic.empty() ? topic : q.topic; }
};

/// Throws DataError on duplicate codes/ids or sentinels outside the options.
void check_survey(const SurveySpec& spec);

Json to_json(const SurveyQuestion& q);
Json to_json(const SurveySpec& spec);
SurveyQuestion survey_question_from_json(const Json& j);
SurveySpec survey_from_json(const Json& j);
SurveySpec load_survey(const std::filesystem::path& file);

enum class Protocol { direct, timely, demographic_baseline };

std::string_view to_string(Protocol p);
std::optional<Protocol> parse_protocol(std::string_view s);

/// One simulated answer.
struct ResponseRecord {
  std::string user_id;
  std::string question_id;
  int value = 0;
  std::string label;
  Confidence confidence = Confidence::low;
  std::string reason;
  std::optional<bool> influenced_by_search;
  Protocol protocol = Protocol::direct;

  bool operator==(const ResponseRecord&) const = default;
};

Json to_json(const ResponseRecord& r);
ResponseRecord response_from_json(const Json& j);
std::string to_jsonl(std::span<const ResponseRecord> records);
std::vector<ResponseRecord> responses_from_jsonl(std::string_view text);

/// Self-reported answers: JSONL lines {"user_id", "question_id", "value"}.
struct TruthRecord {
  std::string user_id;
  std::string question_id;
  int value = 0;

  bool operator==(const TruthRecord&) const = default;
};

std::vector<TruthRecord> load_truth(const std::filesystem::path& file);
void write_truth(const std::filesystem::path& file, std::span<const TruthRecord> truth);

std::string read_text_file(const std::filesystem::path& file);
void write_text_file(const std::filesystem::path& file, std::string_view text);

}  // namespace spirit
