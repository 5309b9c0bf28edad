#include "spirit/survey.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace spirit {

const ResponseOption* SurveyQuestion::find(int code) const {
  auto it = std::find_if(options.begin(), options.end(), [&](const auto& o) { return o.code == code; });
  return it == options.end() ? nullptr : &*it;
}

std::vector<int> SurveyQuestion::scale_codes() const {
  std::vector<int> out;
  for (const auto& o : options) {
    if (!is_sentinel(o.code)) out.push_back(o.code);
  }
  return out;
}

std::string SurveyQuestion::options_list() const {
  std::string out;
  for (const auto& o : options) out += fmt::format("({}) {}\n", o.code, o.label);
  if (!out.empty()) out.pop_back();
  return out;
}

const SurveyQuestion* SurveySpec::find(std::string_view question_id) const {
  auto it = std::find_if(questions.begin(), questions.end(), [&](const auto& q) { return q.question_id == question_id; });
  return it == questions.end() ? nullptr : &*it;
}

void check_survey(const SurveySpec& spec) {
  std::set<std::string> ids;
  for (const auto& q : spec.questions) {
    if (q.question_id.empty()) throw DataError("survey: question with empty id");
    if (!ids.insert(q.question_id).second) throw DataError(fmt::format("survey: duplicate question id '{}'", q.question_id));
    if (q.options.empty()) throw DataError(fmt::format("survey: '{}' has no options", q.question_id));
    std::set<int> codes;
    for (const auto& o : q.options) {
      if (!codes.insert(o.code).second) {
        throw DataError(fmt::format("survey: '{}' repeats option code {}", q.question_id, o.code));
      }
    }
    for (int s : q.sentinel_codes) {
      if (!codes.contains(s)) {
        throw DataError(fmt::format("survey: '{}' sentinel code {} is not an option", q.question_id, s));
      }
    }
  }
}

Json to_json(const SurveyQuestion& q) {
  Json opts = Json::array();
  for (const auto& o : q.options) opts.push_back(Json{{"code", o.code}, {"label", o.label}});
  Json j = Json::object();
  j["question_id"] = q.question_id;
  j["wording"] = q.wording;
  j["options"] = std::move(opts);
  j["ordinal"] = q.ordinal;
  j["sentinel_codes"] = Json(std::vector<int>(q.sentinel_codes.begin(), q.sentinel_codes.end()));
  if (!q.topic.empty()) j["topic"] = q.topic;
  return j;
}

Json to_json(const SurveySpec& spec) {
  Json qs = Json::array();
  for (const auto& q : spec.questions) qs.push_back(to_json(q));
  Json j = Json::object();
  j["survey_id"] = spec.survey_id;
  if (!spec.title.empty()) j["title"] = spec.title;
  if (!spec.topic.empty()) j["topic"] = spec.topic;
  j["questions"] = std::move(qs);
  return j;
}

SurveyQuestion survey_question_from_json(const Json& j) {
  try {
    SurveyQuestion q;
    q.question_id = j.at("question_id").get<std::string>();
    q.wording = j.at("wording").get<std::string>();
    for (const auto& o : j.at("options")) q.options.push_back({o.at("code").get<int>(), o.at("label").get<std::string>()});
    q.ordinal = j.value("ordinal", false);
    if (auto it = j.find("sentinel_codes"); it != j.end()) {
      for (const auto& c : *it) q.sentinel_codes.insert(c.get<int>());
    }
    q.topic = j.value("topic", std::string());
    return q;
  } catch (const Json::exception& e) {
    throw DataError(fmt::format("survey question: {}", e.what()));
  }
}

SurveySpec survey_from_json(const Json& j) {
  SurveySpec spec;
  try {
    spec.survey_id = j.at("survey_id").get<std::string>();
    spec.title = j.value("title", std::string());
    spec.topic = j.value("topic", std::string());
    for (const auto& q : j.at("questions")) spec.questions.push_back(survey_question_from_json(q));
  } catch (const Json::exception& e) {
    throw DataError(fmt::format("survey: {}", e.what()));
  }
  check_survey(spec);
  return spec;
}

SurveySpec load_survey(const std::filesystem::path& file) {
  auto j = parse_json(read_text_file(file));
  if (!j) throw DataError(fmt::format("{}: not valid JSON", file.string()));
  return survey_from_json(*j);
}

std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::direct: return "direct";
    case Protocol::timely: return "timely";
    case Protocol::demographic_baseline: return "demographic_baseline";
  }
  return "direct";
}

std::optional<Protocol> parse_protocol(std::string_view s) {
  if (s == "direct") return Protocol::direct;
  if (s == "timely") return Protocol::timely;
  if (s == "demographic_baseline" || s == "demographic") return Protocol::demographic_baseline;
  return std::nullopt;
}

Json to_json(const ResponseRecord& r) {
  Json j = Json::object();
  j["user_id"] = r.user_id;
  j["question_id"] = r.question_id;
  j["value"] = r.value;
  j["label"] = r.label;
  j["confidence"] = std::string(to_string(r.confidence));
  j["reason"] = r.reason;
  if (r.influenced_by_search) j["influenced_by_search"] = *r.influenced_by_search;
  j["protocol"] = std::string(to_string(r.protocol));
  return j;
}

ResponseRecord response_from_json(const Json& j) {
  try {
    ResponseRecord r;
    r.user_id = j.at("user_id").get<std::string>();
    r.question_id = j.at("question_id").get<std::string>();
    r.value = j.at("value").get<int>();
    r.label = j.at("label").get<std::string>();
    auto conf = parse_confidence(j.at("confidence").get<std::string>());
    if (!conf) throw DataError("response: bad confidence");
    r.confidence = *conf;
    r.reason = j.at("reason").get<std::string>();
    if (auto it = j.find("influenced_by_search"); it != j.end()) r.influenced_by_search = it->get<bool>();
    auto proto = parse_protocol(j.at("protocol").get<std::string>());
    if (!proto) throw DataError("response: bad protocol");
    r.protocol = *proto;
    return r;
  } catch (const Json::exception& e) {
    throw DataError(fmt::format("response record: {}", e.what()));
  }
}

std::string to_jsonl(std::span<const ResponseRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<ResponseRecord> responses_from_jsonl(std::string_view text) {
  std::vector<ResponseRecord> out;
  std::size_t lineno = 0;
  for (auto line : split_lines(text)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto j = parse_json(line);
    if (!j) throw DataError(fmt::format("responses line {}: invalid JSON", lineno));
    out.push_back(response_from_json(*j));
  }
  return out;
}

std::vector<TruthRecord> load_truth(const std::filesystem::path& file) {
  std::vector<TruthRecord> out;
  std::size_t lineno = 0;
  const std::string text = read_text_file(file);
  for (auto line : split_lines(text)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto j = parse_json(line);
    if (!j) throw DataError(fmt::format("{}:{}: invalid JSON", file.string(), lineno));
    try {
      out.push_back({j->at("user_id").get<std::string>(), j->at("question_id").get<std::string>(),
                     j->at("value").get<int>()});
    } catch (const Json::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", file.string(), lineno, e.what()));
    }
  }
  return out;
}

void write_truth(const std::filesystem::path& file, std::span<const TruthRecord> truth) {
  std::string out;
  for (const auto& t : truth) {
    Json j = Json::object();
    j["user_id"] = t.user_id;
    j["question_id"] = t.question_id;
    j["value"] = t.value;
    out += j.dump();
    out += '\n';
  }
  write_text_file(file, out);
}

std::string read_text_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open {}", file.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& file, std::string_view text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write {}", file.string()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError(fmt::format("short write to {}", file.string()));
}

}  // namespace spirit
