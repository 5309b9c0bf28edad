#include "spirit/persona_schema.hpp"

#include <algorithm>
#include <functional>
#include <set>

#include <fmt/format.h>

namespace spirit {

namespace {

constexpr std::array<PrimalDimension, kPrimalCount> kPrimal = {{
    {"good_vs_bad", "good", "bad"},
    {"safe_vs_dangerous", "safe", "dangerous"},
    {"enticing_vs_dull", "enticing", "dull"},
    {"alive_vs_mechanistic", "alive", "mechanistic"},
    {"pleasurable_vs_miserable", "pleasurable", "miserable"},
    {"regenerative_vs_degenerative", "regenerative", "degenerative"},
    {"progressing_vs_declining", "progressing", "declining"},
    {"harmless_vs_threatening", "harmless", "threatening"},
    {"cooperative_vs_competitive", "cooperative", "competitive"},
    {"stable_vs_fragile", "stable", "fragile"},
    {"just_vs_unjust", "just", "unjust"},
    {"interesting_vs_boring", "interesting", "boring"},
    {"beautiful_vs_ugly", "beautiful", "ugly"},
    {"abundant_vs_barren", "abundant", "barren"},
    {"worth_exploring_vs_not_worth_exploring", "worth_exploring", "not_worth_exploring"},
    {"meaningful_vs_meaningless", "meaningful", "meaningless"},
    {"improvable_vs_too_hard_to_improve", "improvable", "too_hard_to_improve"},
    {"funny_vs_not_funny", "funny", "not_funny"},
    {"intentional_vs_unintentional", "intentional", "unintentional"},
    {"needs_me_vs_doesnt_need_me", "needs_me", "doesnt_need_me"},
    {"interactive_vs_indifferent", "interactive", "indifferent"},
    {"interconnected_vs_separable", "interconnected", "separable"},
    {"changing_vs_static", "changing", "static"},
    {"hierarchical_vs_nonhierarchical", "hierarchical", "nonhierarchical"},
    {"understandable_vs_too_hard_to_understand", "understandable", "too_hard_to_understand"},
    {"acceptable_vs_unacceptable", "acceptable", "unacceptable"},
}};

constexpr std::array<std::string_view, kBig5Count> kBig5 = {"openness", "conscientiousness", "extraversion",
                                                            "agreeableness", "neuroticism"};

constexpr std::array<std::string_view, 7> kTopLevel = {"personality_big5",     "primal_world_beliefs",
                                                       "values_and_identities", "life_experiences",
                                                       "opinions_and_beliefs", "interaction_style",
                                                       "meta"};

constexpr std::array<std::string_view, 15> kDemographicKeys = {
    "age",       "gender",    "sex",       "race",           "ethnicity",          "region",
    "location",  "income",    "education", "urbanicity",     "political_ideology", "party_identification",
    "birth_year", "marital_status", "nationality"};

std::string join_path(std::string_view base, std::string_view key) {
  if (base.empty()) return std::string(key);
  return fmt::format("{}.{}", base, key);
}

/// Walks one document, accumulating violations.
class SchemaChecker {
 public:
  std::vector<Violation> violations;

  void add(std::string path, ViolationKind kind, std::string detail = {}) {
    violations.push_back({std::move(path), kind, std::move(detail)});
  }

  /// Checks `obj` is an object with exactly `keys`. Returns false when not an object.
  template <class Keys>
  bool closed_object(const Json& obj, const std::string& path, const Keys& keys) {
    if (!obj.is_object()) {
      add(path.empty() ? "$" : path, ViolationKind::not_an_object);
      return false;
    }
    for (const auto& k : keys) {
      if (!obj.contains(std::string(k))) add(join_path(path, k), ViolationKind::missing_key);
    }
    for (const auto& [k, _] : obj.items()) {
      bool known = std::any_of(std::begin(keys), std::end(keys), [&](std::string_view e) { return e == k; });
      if (!known) add(join_path(path, k), ViolationKind::unknown_key);
    }
    return true;
  }

  /// Returns the string at obj[key], or nullopt (reporting type errors).
  std::optional<std::string> string_field(const Json& obj, std::string_view key, const std::string& path) {
    auto it = obj.find(std::string(key));
    if (it == obj.end()) return std::nullopt;  // already reported as missing
    if (!it->is_string()) {
      add(join_path(path, key), ViolationKind::wrong_type, "expected string");
      return std::nullopt;
    }
    return it->get<std::string>();
  }

  std::optional<std::string> nonempty_field(const Json& obj, std::string_view key, const std::string& path,
                                            ViolationKind empty_kind = ViolationKind::empty_value) {
    auto s = string_field(obj, key, path);
    if (s && trim(*s).empty()) {
      add(join_path(path, key), empty_kind);
      return std::nullopt;
    }
    return s;
  }

  std::optional<Confidence> confidence_field(const Json& obj, const std::string& path) {
    auto s = string_field(obj, "confidence", path);
    if (!s) return std::nullopt;
    auto c = parse_confidence(*s);
    if (!c) add(join_path(path, "confidence"), ViolationKind::bad_enum, *s);
    return c;
  }

  std::optional<std::string> rationale_field(const Json& obj, const std::string& path) {
    return nonempty_field(obj, "rationale", path, ViolationKind::empty_rationale);
  }

  /// Shared shape {value-key, confidence, rationale}; `allowed` empty means free text.
  std::optional<Judgment> judgment(const Json& obj, const std::string& path, std::string_view value_key,
                                   std::span<const std::string_view> allowed) {
    const std::array<std::string_view, 3> keys = {value_key, "confidence", "rationale"};
    if (!closed_object(obj, path, keys)) return std::nullopt;
    auto value = nonempty_field(obj, value_key, path);
    if (value && !allowed.empty() &&
        std::find(allowed.begin(), allowed.end(), std::string_view(*value)) == allowed.end()) {
      add(join_path(path, value_key), ViolationKind::bad_enum, *value);
      value.reset();
    }
    auto conf = confidence_field(obj, path);
    auto rationale = rationale_field(obj, path);
    if (!value || !conf || !rationale) return std::nullopt;
    return Judgment{*value, *conf, *rationale};
  }

  template <class Item, class Parse>
  std::vector<Item> list(const Json& parent, std::string_view key, const std::string& parent_path, Parse parse) {
    std::vector<Item> out;
    auto it = parent.find(std::string(key));
    if (it == parent.end()) return out;
    auto path = join_path(parent_path, key);
    if (!it->is_array()) {
      add(path, ViolationKind::wrong_type, "expected array");
      return out;
    }
    for (std::size_t i = 0; i < it->size(); ++i) {
      auto item = parse((*it)[i], fmt::format("{}[{}]", path, i));
      if (item) out.push_back(std::move(*item));
    }
    return out;
  }

  std::optional<EvidenceItem> evidence(const Json& obj, const std::string& path, std::string_view label_key) {
    auto j = judgment(obj, path, label_key, {});
    if (!j) return std::nullopt;
    return EvidenceItem{j->value, j->confidence, j->rationale};
  }

  std::optional<Opinion> opinion(const Json& obj, const std::string& path) {
    constexpr std::array<std::string_view, 4> keys = {"topic", "stance_summary", "confidence", "rationale"};
    if (!closed_object(obj, path, keys)) return std::nullopt;
    auto topic = nonempty_field(obj, "topic", path);
    auto stance = nonempty_field(obj, "stance_summary", path);
    auto conf = confidence_field(obj, path);
    auto rationale = rationale_field(obj, path);
    if (!topic || !stance || !conf || !rationale) return std::nullopt;
    return Opinion{*topic, *stance, *conf, *rationale};
  }

  void scan_demographic_keys(const Json& node, const std::string& path) {
    if (node.is_object()) {
      for (const auto& [k, v] : node.items()) {
        auto child = join_path(path, k);
        if (is_demographic_key(k)) add(child, ViolationKind::demographic_key);
        scan_demographic_keys(v, child);
      }
    } else if (node.is_array()) {
      for (std::size_t i = 0; i < node.size(); ++i) scan_demographic_keys(node[i], fmt::format("{}[{}]", path, i));
    }
  }
};

Json judgment_json(std::string_view value_key, const std::string& value, Confidence c, const std::string& rationale) {
  Json j = Json::object();
  j[std::string(value_key)] = value;
  j["confidence"] = std::string(to_string(c));
  j["rationale"] = rationale;
  return j;
}

Json evidence_list(const std::vector<EvidenceItem>& items, std::string_view label_key) {
  Json arr = Json::array();
  for (const auto& it : items) arr.push_back(judgment_json(label_key, it.label, it.confidence, it.rationale));
  return arr;
}

Json opinion_list(const std::vector<Opinion>& items) {
  Json arr = Json::array();
  for (const auto& o : items) {
    Json j = Json::object();
    j["topic"] = o.topic;
    j["stance_summary"] = o.stance_summary;
    j["confidence"] = std::string(to_string(o.confidence));
    j["rationale"] = o.rationale;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace

std::string_view to_string(Confidence c) {
  switch (c) {
    case Confidence::low: return "low";
    case Confidence::medium: return "medium";
    case Confidence::high: return "high";
  }
  return "low";
}

std::optional<Confidence> parse_confidence(std::string_view s) {
  if (s == "high") return Confidence::high;
  if (s == "medium") return Confidence::medium;
  if (s == "low") return Confidence::low;
  return std::nullopt;
}

std::span<const PrimalDimension, kPrimalCount> primal_dimensions() { return kPrimal; }
std::span<const std::string_view, kBig5Count> big5_traits() { return kBig5; }

std::string lean_string(const PrimalDimension& dim, Lean lean) {
  switch (lean) {
    case Lean::leans_a: return fmt::format("leans_{}", dim.pole_a);
    case Lean::leans_b: return fmt::format("leans_{}", dim.pole_b);
    case Lean::balanced: return "balanced";
    case Lean::unclear: return "unclear";
  }
  return "unclear";
}

std::optional<Lean> parse_lean(const PrimalDimension& dim, std::string_view s) {
  for (Lean l : {Lean::leans_a, Lean::balanced, Lean::leans_b, Lean::unclear}) {
    if (lean_string(dim, l) == s) return l;
  }
  return std::nullopt;
}

bool is_demographic_key(std::string_view key) {
  return std::find(kDemographicKeys.begin(), kDemographicKeys.end(), key) != kDemographicKeys.end();
}

Validated<PersonaProfile> validate_profile(const Json& doc) {
  SchemaChecker check;
  PersonaProfile p;
  if (!check.closed_object(doc, "", kTopLevel)) return Validated<PersonaProfile>::failure(check.violations);
  check.scan_demographic_keys(doc, "");

  if (auto it = doc.find("personality_big5"); it != doc.end()) {
    if (check.closed_object(*it, "personality_big5", kBig5)) {
      for (std::size_t i = 0; i < kBig5Count; ++i) {
        auto key = std::string(kBig5[i]);
        if (!it->contains(key)) continue;
        auto j = check.judgment((*it)[key], join_path("personality_big5", key), "approx_level", {});
        if (j) p.big5[i] = std::move(*j);
      }
    }
  }

  if (auto it = doc.find("primal_world_beliefs"); it != doc.end()) {
    std::array<std::string_view, kPrimalCount> keys;
    std::transform(kPrimal.begin(), kPrimal.end(), keys.begin(), [](const auto& d) { return d.key; });
    if (check.closed_object(*it, "primal_world_beliefs", keys)) {
      for (std::size_t i = 0; i < kPrimalCount; ++i) {
        const auto& dim = kPrimal[i];
        auto key = std::string(dim.key);
        if (!it->contains(key)) continue;
        auto path = join_path("primal_world_beliefs", key);
        std::array<std::string_view, 4> allowed_store;
        std::array<std::string, 4> allowed_strings = {lean_string(dim, Lean::leans_a), "balanced",
                                                      lean_string(dim, Lean::leans_b), "unclear"};
        for (std::size_t k = 0; k < 4; ++k) allowed_store[k] = allowed_strings[k];
        auto j = check.judgment((*it)[key], path, "value", allowed_store);
        if (j) p.primal[i] = PrimalBelief{*parse_lean(dim, j->value), j->confidence, j->rationale};
      }
    }
  }

  if (auto it = doc.find("values_and_identities"); it != doc.end()) {
    constexpr std::array<std::string_view, 2> keys = {"salient_identities", "core_values"};
    const std::string base = "values_and_identities";
    if (check.closed_object(*it, base, keys)) {
      p.salient_identities = check.list<EvidenceItem>(
          *it, "salient_identities", base, [&](const Json& o, const std::string& path) {
            return check.evidence(o, path, "identity");
          });
      p.core_values = check.list<EvidenceItem>(*it, "core_values", base, [&](const Json& o, const std::string& path) {
        return check.evidence(o, path, "value_label");
      });
    }
  }

  if (auto it = doc.find("life_experiences"); it != doc.end()) {
    constexpr std::array<std::string_view, 3> keys = {"education_and_work", "family_and_relationships",
                                                      "turning_points_or_themes"};
    const std::string base = "life_experiences";
    if (check.closed_object(*it, base, keys)) {
      auto summary = [&](const Json& o, const std::string& path) { return check.evidence(o, path, "summary"); };
      p.education_and_work = check.list<EvidenceItem>(*it, "education_and_work", base, summary);
      p.family_and_relationships = check.list<EvidenceItem>(*it, "family_and_relationships", base, summary);
      p.turning_points_or_themes = check.list<EvidenceItem>(*it, "turning_points_or_themes", base, summary);
    }
  }

  if (auto it = doc.find("opinions_and_beliefs"); it != doc.end()) {
    constexpr std::array<std::string_view, 4> keys = {"politics_and_society", "work_and_career",
                                                      "technology_and_social_media", "other_recurrent_themes"};
    const std::string base = "opinions_and_beliefs";
    if (check.closed_object(*it, base, keys)) {
      auto op = [&](const Json& o, const std::string& path) { return check.opinion(o, path); };
      p.politics_and_society = check.list<Opinion>(*it, "politics_and_society", base, op);
      p.work_and_career = check.list<Opinion>(*it, "work_and_career", base, op);
      p.technology_and_social_media = check.list<Opinion>(*it, "technology_and_social_media", base, op);
      p.other_recurrent_themes = check.list<Opinion>(*it, "other_recurrent_themes", base, op);
    }
  }

  if (auto it = doc.find("interaction_style"); it != doc.end()) {
    constexpr std::array<std::string_view, 3> keys = {"tone", "conflict_style", "information_orientation"};
    const std::string base = "interaction_style";
    if (check.closed_object(*it, base, keys)) {
      if (it->contains("tone")) {
        if (auto j = check.judgment((*it)["tone"], join_path(base, "tone"), "value", {})) p.tone = *j;
      }
      if (it->contains("conflict_style")) {
        if (auto j = check.judgment((*it)["conflict_style"], join_path(base, "conflict_style"), "value",
                                    kConflictStyles)) {
          p.conflict_style = *j;
        }
      }
      if (it->contains("information_orientation")) {
        if (auto j = check.judgment((*it)["information_orientation"], join_path(base, "information_orientation"),
                                    "value", kInformationOrientations)) {
          p.information_orientation = *j;
        }
      }
    }
  }

  if (auto it = doc.find("meta"); it != doc.end()) {
    constexpr std::array<std::string_view, 2> keys = {"overall_uncertainty_comment", "notable_absences"};
    if (check.closed_object(*it, "meta", keys)) {
      if (auto s = check.string_field(*it, "overall_uncertainty_comment", "meta")) p.overall_uncertainty_comment = *s;
      if (auto s = check.string_field(*it, "notable_absences", "meta")) p.notable_absences = *s;
    }
  }

  if (!check.violations.empty()) return Validated<PersonaProfile>::failure(std::move(check.violations));
  return Validated<PersonaProfile>::success(std::move(p));
}

std::optional<ArtifactParts> split_artifact(std::string_view text) {
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto end = nl == std::string_view::npos ? text.size() : nl;
    if (trim(text.substr(pos, end - pos)) == "---") {
      auto rest = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
      return ArtifactParts{text.substr(0, pos), rest};
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return std::nullopt;
}

Validated<PersonaProfile> parse_artifact(std::string_view text) {
  auto parts = split_artifact(text);
  if (!parts) {
    return Validated<PersonaProfile>::failure({{"$", ViolationKind::missing_separator, "no line equal to ---"}});
  }
  auto doc = parse_json(strip_code_fence(parts->json_part));
  if (!doc) return Validated<PersonaProfile>::failure({{"$", ViolationKind::parse_error, "JSON part does not parse"}});

  auto result = validate_profile(*doc);
  auto narrative = trim(parts->narrative);
  if (narrative.empty()) {
    result.violations.push_back({"narrative", ViolationKind::empty_narrative, {}});
    result.value.reset();
  }
  if (!result.ok()) return result;

  result.value->narrative = std::string(narrative);
  auto words = count_words(narrative);
  if (words < kNarrativeMinWords || words > kNarrativeMaxWords) {
    result.warnings.push_back(fmt::format("narrative has {} words (expected {}-{})", words, kNarrativeMinWords,
                                          kNarrativeMaxWords));
  }
  return result;
}

Json to_json(const PersonaProfile& p) {
  Json doc = Json::object();

  Json big5 = Json::object();
  for (std::size_t i = 0; i < kBig5Count; ++i) {
    big5[std::string(kBig5[i])] = judgment_json("approx_level", p.big5[i].value, p.big5[i].confidence, p.big5[i].rationale);
  }
  doc["personality_big5"] = std::move(big5);

  Json primal = Json::object();
  for (std::size_t i = 0; i < kPrimalCount; ++i) {
    const auto& b = p.primal[i];
    primal[std::string(kPrimal[i].key)] = judgment_json("value", lean_string(kPrimal[i], b.value), b.confidence, b.rationale);
  }
  doc["primal_world_beliefs"] = std::move(primal);

  Json values = Json::object();
  values["salient_identities"] = evidence_list(p.salient_identities, "identity");
  values["core_values"] = evidence_list(p.core_values, "value_label");
  doc["values_and_identities"] = std::move(values);

  Json life = Json::object();
  life["education_and_work"] = evidence_list(p.education_and_work, "summary");
  life["family_and_relationships"] = evidence_list(p.family_and_relationships, "summary");
  life["turning_points_or_themes"] = evidence_list(p.turning_points_or_themes, "summary");
  doc["life_experiences"] = std::move(life);

  Json opinions = Json::object();
  opinions["politics_and_society"] = opinion_list(p.politics_and_society);
  opinions["work_and_career"] = opinion_list(p.work_and_career);
  opinions["technology_and_social_media"] = opinion_list(p.technology_and_social_media);
  opinions["other_recurrent_themes"] = opinion_list(p.other_recurrent_themes);
  doc["opinions_and_beliefs"] = std::move(opinions);

  Json style = Json::object();
  style["tone"] = judgment_json("value", p.tone.value, p.tone.confidence, p.tone.rationale);
  style["conflict_style"] = judgment_json("value", p.conflict_style.value, p.conflict_style.confidence,
                                          p.conflict_style.rationale);
  style["information_orientation"] =
      judgment_json("value", p.information_orientation.value, p.information_orientation.confidence,
                    p.information_orientation.rationale);
  doc["interaction_style"] = std::move(style);

  Json meta = Json::object();
  meta["overall_uncertainty_comment"] = p.overall_uncertainty_comment;
  meta["notable_absences"] = p.notable_absences;
  doc["meta"] = std::move(meta);
  return doc;
}

std::string serialize_artifact(const PersonaProfile& p) {
  return fmt::format("{}\n---\n{}\n", to_json(p).dump(2), p.narrative);
}

namespace {

template <class F>
void for_each_confidence(const PersonaProfile& p, F&& f) {
  for (const auto& j : p.big5) f(j.confidence);
  for (const auto& b : p.primal) f(b.confidence);
  for (const auto* list : {&p.salient_identities, &p.core_values, &p.education_and_work, &p.family_and_relationships,
                           &p.turning_points_or_themes}) {
    for (const auto& e : *list) f(e.confidence);
  }
  for (const auto* list : {&p.politics_and_society, &p.work_and_career, &p.technology_and_social_media,
                           &p.other_recurrent_themes}) {
    for (const auto& o : *list) f(o.confidence);
  }
  f(p.tone.confidence);
  f(p.conflict_style.confidence);
  f(p.information_orientation.confidence);
}

}  // namespace

std::size_t count_low_confidence(const PersonaProfile& p) {
  std::size_t n = 0;
  for_each_confidence(p, [&](Confidence c) { n += c == Confidence::low ? 1 : 0; });
  return n;
}

std::size_t judgment_count(const PersonaProfile& p) {
  std::size_t n = 0;
  for_each_confidence(p, [&](Confidence) { ++n; });
  return n;
}

std::optional<std::string> demographic_value(const DemographicPersona& d, std::string_view field) {
  if (field == "age") return d.age ? std::optional<std::string>(std::to_string(*d.age)) : std::nullopt;
  if (field == "race") return d.race;
  if (field == "gender") return d.gender;
  if (field == "political_ideology") return d.political_ideology;
  if (field == "income") return d.income;
  if (field == "education") return d.education;
  if (field == "urbanicity") return d.urbanicity;
  return std::nullopt;
}

std::string render_demographics(const DemographicPersona& d) {
  std::string out;
  for (auto field : kDemographicFields) {
    out += fmt::format("{}: {}\n", field, demographic_value(d, field).value_or("missing"));
  }
  return out;
}

Json to_json(const DemographicPersona& d) {
  Json j = Json::object();
  j["age"] = d.age ? Json(*d.age) : Json("missing");
  for (auto field : std::span(kDemographicFields).subspan(1)) {
    auto v = demographic_value(d, field);
    j[std::string(field)] = v ? Json(*v) : Json("missing");
  }
  return j;
}

DemographicPersona demographics_from_json(const Json& j) {
  if (!j.is_object()) throw DataError("demographics: expected an object");
  for (auto field : kDemographicFields) {
    if (!j.contains(std::string(field))) {
      throw DataError(fmt::format("demographics: '{}' absent (mark it \"missing\" explicitly)", field));
    }
  }
  auto text = [&](std::string_view field) -> std::optional<std::string> {
    const auto& v = j.at(std::string(field));
    if (v.is_null()) return std::nullopt;
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (!v.is_string()) throw DataError(fmt::format("demographics: '{}' must be a string", field));
    auto s = v.get<std::string>();
    if (s == "missing") return std::nullopt;
    return s;
  };
  DemographicPersona d;
  const auto& age = j.at("age");
  if (age.is_number_integer()) {
    d.age = age.get<int>();
  } else if (auto s = text("age")) {
    try {
      d.age = std::stoi(*s);
    } catch (const std::exception&) {
      throw DataError(fmt::format("demographics: age '{}' is not a number of years", *s));
    }
  }
  d.race = text("race");
  d.gender = text("gender");
  d.political_ideology = text("political_ideology");
  d.income = text("income");
  d.education = text("education");
  d.urbanicity = text("urbanicity");
  return d;
}

std::string_view schema_template() {
  static constexpr std::string_view kTemplate =
#include "schema_template.inc"
      ;
  return trim(kTemplate);
}

}  // namespace spirit
