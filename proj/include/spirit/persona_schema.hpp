#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spirit/common.hpp"

namespace spirit {

/// Ordered low < medium < high.
enum class Confidence { low = 0, medium = 1, high = 2 };

std::string_view to_string(Confidence c);
std::optional<Confidence> parse_confidence(std::string_view s);

/// value + confidence + rationale triplet. For Big Five entries `value`
/// holds the schema's `approx_level`.
struct Judgment {
  std::string value;
  Confidence confidence = Confidence::low;
  std::string rationale;

  bool operator==(const Judgment&) const = default;
};

/// One primal world belief dimension, e.g. {"safe_vs_dangerous", "safe", "dangerous"}.
struct PrimalDimension {
  std::string_view key;
  std::string_view pole_a;
  std::string_view pole_b;
};

inline constexpr std::size_t kPrimalCount = 26;
inline constexpr std::size_t kBig5Count = 5;

std::span<const PrimalDimension, kPrimalCount> primal_dimensions();
std::span<const std::string_view, kBig5Count> big5_traits();

enum class Lean { leans_a, balanced, leans_b, unclear };

/// Renders e.g. "leans_safe" / "balanced" / "leans_dangerous" / "unclear".
std::string lean_string(const PrimalDimension& dim, Lean lean);
std::optional<Lean> parse_lean(const PrimalDimension& dim, std::string_view s);

struct PrimalBelief {
  Lean value = Lean::unclear;
  Confidence confidence = Confidence::low;
  std::string rationale;

  bool operator==(const PrimalBelief&) const = default;
};

/// List entry with a single descriptive field (identity, value_label or summary).
struct EvidenceItem {
  std::string label;
  Confidence confidence = Confidence::low;
  std::string rationale;

  bool operator==(const EvidenceItem&) const = default;
};

struct Opinion {
  std::string topic;
  std::string stance_summary;
  Confidence confidence = Confidence::low;
  std::string rationale;

  bool operator==(const Opinion&) const = default;
};

inline constexpr std::array<std::string_view, 5> kConflictStyles = {"confrontational", "avoidant", "accommodating",
                                                                    "mixed", "unclear"};
inline constexpr std::array<std::string_view, 5> kInformationOrientations = {
    "news_junkie", "casually_informed", "low_information", "niche_expert", "unclear"};

/// The semi-structured persona artifact plus its narrative.
struct PersonaProfile {
  std::array<Judgment, kBig5Count> big5;            // indexed as big5_traits()
  std::array<PrimalBelief, kPrimalCount> primal;   // indexed as primal_dimensions()

  std::vector<EvidenceItem> salient_identities;
  std::vector<EvidenceItem> core_values;

  std::vector<EvidenceItem> education_and_work;
  std::vector<EvidenceItem> family_and_relationships;
  std::vector<EvidenceItem> turning_points_or_themes;

  std::vector<Opinion> politics_and_society;
  std::vector<Opinion> work_and_career;
  std::vector<Opinion> technology_and_social_media;
  std::vector<Opinion> other_recurrent_themes;

  Judgment tone;
  Judgment conflict_style;
  Judgment information_orientation;

  std::string overall_uncertainty_comment;
  std::string notable_absences;

  std::string narrative;

  bool operator==(const PersonaProfile&) const = default;
};

/// Keys rejected anywhere in a persona document.
bool is_demographic_key(std::string_view key);

/// Validates the JSON part of an artifact against the closed schema. Every
/// violation is collected; nothing throws on malformed input.
Validated<PersonaProfile> validate_profile(const Json& doc);

/// Narrative soft bounds in words; outside them only a warning is issued.
inline constexpr std::size_t kNarrativeMinWords = 50;
inline constexpr std::size_t kNarrativeMaxWords = 600;

/// Splits "<json>\n---\n<narrative>" on the first line that trims to "---".
struct ArtifactParts {
  std::string_view json_part;
  std::string_view narrative;
};
std::optional<ArtifactParts> split_artifact(std::string_view text);

/// Full Painter output: split, parse, validate JSON, attach narrative.
Validated<PersonaProfile> parse_artifact(std::string_view text);

Json to_json(const PersonaProfile& profile);
std::string serialize_artifact(const PersonaProfile& profile);

/// Entries carrying confidence == low, across every schema section.
std::size_t count_low_confidence(const PersonaProfile& profile);
/// Total number of confidence-bearing entries.
std::size_t judgment_count(const PersonaProfile& profile);

/// The schema block embedded in the Painter system prompt.
std::string_view schema_template();

/// Demographic-only persona: exactly seven attributes, each present or
/// explicitly missing.
struct DemographicPersona {
  std::optional<int> age;
  std::optional<std::string> race;
  std::optional<std::string> gender;
  std::optional<std::string> political_ideology;
  std::optional<std::string> income;
  std::optional<std::string> education;
  std::optional<std::string> urbanicity;

  bool operator==(const DemographicPersona&) const = default;
};

inline constexpr std::array<std::string_view, 7> kDemographicFields = {
    "age", "race", "gender", "political_ideology", "income", "education", "urbanicity"};

/// Value of a demographic field rendered as text, nullopt when missing.
std::optional<std::string> demographic_value(const DemographicPersona& d, std::string_view field);

/// "age: 34\nrace: ...\nincome: missing\n..." in field order.
std::string render_demographics(const DemographicPersona& d);

/// Missing values serialize as the string "missing".
Json to_json(const DemographicPersona& d);
/// Every one of the seven keys must be present; null or "missing" marks absence.
DemographicPersona demographics_from_json(const Json& j);

}  // namespace spirit
