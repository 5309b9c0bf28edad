#include "spirit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace spirit {

std::vector<EvaluationPair> make_pairs(std::span<const ResponseRecord> responses, std::span<const TruthRecord> truth,
                                       const SurveySpec& survey) {
  std::map<std::pair<std::string, std::string>, int> self;
  for (const auto& t : truth) self[{t.user_id, t.question_id}] = t.value;
  std::vector<EvaluationPair> out;
  for (const auto& r : responses) {
    auto it = self.find({r.user_id, r.question_id});
    if (it == self.end()) continue;
    const auto* q = survey.find(r.question_id);
    if (!q) continue;
    if (!q->find(r.value) || !q->find(it->second)) {
      throw DataError(fmt::format("{}/{}: codes {} vs {} must both be options", r.user_id, r.question_id, r.value,
                                  it->second));
    }
    out.push_back({r.user_id, r.question_id, r.value, it->second, q->ordinal, q->scale_codes(), q->sentinel_codes});
  }
  return out;
}

double exact_match_rate(std::span<const EvaluationPair> pairs) {
  if (pairs.empty()) throw InsufficientDataError("exact match rate of zero pairs");
  auto hits = std::count_if(pairs.begin(), pairs.end(), [](const auto& p) { return p.inferred == p.self_report; });
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

double user_accuracy(std::span<const EvaluationPair> pairs) {
  if (pairs.empty()) throw InsufficientDataError("user accuracy needs at least one pair");
  for (const auto& p : pairs) {
    if (p.user_id != pairs.front().user_id) throw DataError("user_accuracy: pairs span several users");
  }
  return exact_match_rate(pairs);
}

std::map<std::string, double> accuracy_by_user(std::span<const EvaluationPair> pairs) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> tally;
  for (const auto& p : pairs) {
    auto& [hits, n] = tally[p.user_id];
    hits += p.inferred == p.self_report ? 1 : 0;
    ++n;
  }
  std::map<std::string, double> out;
  for (const auto& [user, t] : tally) out[user] = static_cast<double>(t.first) / static_cast<double>(t.second);
  return out;
}

double macro_accuracy(std::span<const double> user_accuracies) {
  if (user_accuracies.empty()) throw InsufficientDataError("macro accuracy needs at least one user");
  double sum = 0.0;
  for (double a : user_accuracies) sum += a;
  return sum / static_cast<double>(user_accuracies.size());
}

namespace {

std::optional<std::ptrdiff_t> rank_of(const EvaluationPair& p, int code) {
  auto it = std::find(p.scale_codes.begin(), p.scale_codes.end(), code);
  if (it == p.scale_codes.end()) return std::nullopt;
  return it - p.scale_codes.begin();
}

// Counts (distance-1, exact, total) over the ordinal, sentinel-free pairs.
struct OrdinalTally {
  std::size_t off_by_one = 0;
  std::size_t exact = 0;
  std::size_t n = 0;
};

OrdinalTally tally_ordinal(std::span<const EvaluationPair> pairs) {
  OrdinalTally t;
  for (const auto& p : pairs) {
    if (!p.ordinal) throw NonOrdinalError(fmt::format("question '{}' is not ordinal", p.question_id));
    if (p.sentinel_codes.contains(p.inferred) || p.sentinel_codes.contains(p.self_report)) continue;
    auto a = rank_of(p, p.inferred);
    auto b = rank_of(p, p.self_report);
    if (!a || !b) throw DataError(fmt::format("{}/{}: code outside the scale", p.user_id, p.question_id));
    auto d = std::abs(*a - *b);
    t.off_by_one += d == 1 ? 1 : 0;
    t.exact += d == 0 ? 1 : 0;
    ++t.n;
  }
  return t;
}

}  // namespace

double off_by_one_rate(std::span<const EvaluationPair> pairs) {
  auto t = tally_ordinal(pairs);
  if (t.n == 0) throw InsufficientDataError("no substantive ordinal pairs");
  return static_cast<double>(t.off_by_one) / static_cast<double>(t.n);
}

double ordinal_exact_rate(std::span<const EvaluationPair> pairs) {
  auto t = tally_ordinal(pairs);
  if (t.n == 0) throw InsufficientDataError("no substantive ordinal pairs");
  return static_cast<double>(t.exact) / static_cast<double>(t.n);
}

QuestionOrder QuestionOrder::from(const SurveySpec& survey) {
  QuestionOrder o;
  for (const auto& q : survey.questions) {
    o.question_ids.push_back(q.question_id);
    o.sentinels[q.question_id] = q.sentinel_codes;
  }
  return o;
}

std::optional<std::size_t> QuestionOrder::position(std::string_view question_id) const {
  auto it = std::find(question_ids.begin(), question_ids.end(), question_id);
  if (it == question_ids.end()) return std::nullopt;
  return static_cast<std::size_t>(it - question_ids.begin()) + 1;
}

double position_weighted_mean(std::span<const std::pair<std::size_t, int>> position_values) {
  if (position_values.empty()) throw InsufficientDataError("composite of zero items");
  double num = 0.0;
  double den = 0.0;
  for (const auto& [q, y] : position_values) {
    num += static_cast<double>(q) * static_cast<double>(y);
    den += static_cast<double>(q);
  }
  return num / den;
}

CompositeScore position_weighted_composite(std::span<const ResponseRecord> user_responses,
                                           const QuestionOrder& order) {
  CompositeScore out;
  std::vector<std::pair<std::size_t, int>> items;
  for (const auto& r : user_responses) {
    if (out.user_id.empty()) out.user_id = r.user_id;
    if (r.user_id != out.user_id) throw DataError("composite: responses span several users");
    auto pos = order.position(r.question_id);
    if (!pos) throw MissingOrderError(fmt::format("question '{}' has no survey position", r.question_id));
    if (auto s = order.sentinels.find(r.question_id); s != order.sentinels.end() && s->second.contains(r.value)) {
      continue;
    }
    items.emplace_back(*pos, r.value);
  }
  out.q_count = items.size();
  out.score = position_weighted_mean(items);
  return out;
}

double response_entropy(std::span<const int> values) {
  if (values.size() < 2) throw InsufficientDataError("entropy needs at least two responses");
  std::map<int, std::size_t> counts;
  for (int v : values) ++counts[v];
  const double n = static_cast<double>(values.size());
  double h = 0.0;
  for (const auto& [code, c] : counts) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h == 0.0 ? 0.0 : h;
}

double response_entropy(std::span<const ResponseRecord> responses_to_one_question) {
  std::vector<int> values;
  for (const auto& r : responses_to_one_question) {
    if (r.question_id != responses_to_one_question.front().question_id) {
      throw DataError("response_entropy: records span several questions");
    }
    values.push_back(r.value);
  }
  return response_entropy(values);
}

std::map<Confidence, double> confidence_histogram(std::span<const ResponseRecord> records) {
  std::map<Confidence, double> out{{Confidence::high, 0.0}, {Confidence::medium, 0.0}, {Confidence::low, 0.0}};
  if (records.empty()) return out;
  for (const auto& r : records) out[r.confidence] += 1.0;
  for (auto& [c, v] : out) v /= static_cast<double>(records.size());
  return out;
}

std::vector<LowConfidenceRow> low_conf_vs_accuracy(std::span<const ResponseRecord> records,
                                                   std::span<const EvaluationPair> pairs) {
  std::map<std::string, std::size_t> low;
  for (const auto& r : records) {
    if (r.confidence == Confidence::low) ++low[r.user_id];
  }
  std::vector<LowConfidenceRow> out;
  for (const auto& [user, acc] : accuracy_by_user(pairs)) {
    auto it = low.find(user);
    out.push_back({user, it == low.end() ? 0 : it->second, acc});
  }
  return out;
}

std::vector<TraceQualityRow> trace_quality_table(std::span<const BankEntry> bank,
                                                 const std::map<std::string, double>& accuracy) {
  std::vector<TraceQualityRow> out;
  for (const auto& e : bank) {
    auto it = accuracy.find(e.user_id);
    if (it == accuracy.end()) continue;
    std::string platform;
    for (auto p : e.platforms) platform += (platform.empty() ? "" : "+") + std::string(to_string(p));
    out.push_back({e.user_id, e.trace.log_char_count, count_low_confidence(e.profile), it->second, platform});
  }
  return out;
}

double least_squares_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("least_squares_slope: length mismatch");
  if (x.size() < 2) throw InsufficientDataError("slope needs at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx == 0.0 ? 0.0 : sxy / sxx;
}

QuantileSummary summarize(std::vector<double> values) {
  QuantileSummary s;
  s.n = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  auto q = [&](double p) {
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  s.min = values.front();
  s.max = values.back();
  s.q1 = q(0.25);
  s.median = q(0.5);
  s.q3 = q(0.75);
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  return s;
}

namespace {

Json to_json(const QuantileSummary& s) {
  Json j = Json::object();
  j["n"] = s.n;
  j["min"] = s.min;
  j["q1"] = s.q1;
  j["median"] = s.median;
  j["q3"] = s.q3;
  j["max"] = s.max;
  j["mean"] = s.mean;
  return j;
}

Json histogram_json(const std::map<Confidence, double>& h) {
  Json j = Json::object();
  for (auto c : {Confidence::high, Confidence::medium, Confidence::low}) j[std::string(to_string(c))] = h.at(c);
  return j;
}

}  // namespace

Json diagnose_report(const DiagnoseInput& in) {
  if (!in.survey) throw UsageError("diagnose: survey required");
  const auto& survey = *in.survey;
  if (in.responses.empty()) throw DataError("diagnose: run has no responses");

  std::map<std::string, std::vector<ResponseRecord>> by_question;
  std::map<std::string, std::vector<ResponseRecord>> by_user;
  for (const auto& r : in.responses) {
    by_question[r.question_id].push_back(r);
    by_user[r.user_id].push_back(r);
  }

  Json report = Json::object();
  report["survey_id"] = survey.survey_id;
  report["n_responses"] = in.responses.size();
  report["n_users"] = by_user.size();
  report["confidence_histogram"] = histogram_json(confidence_histogram(in.responses));

  Json entropy = Json::object();
  for (const auto& q : survey.questions) {
    auto it = by_question.find(q.question_id);
    if (it == by_question.end() || it->second.size() < 2) {
      entropy[q.question_id] = nullptr;
    } else {
      entropy[q.question_id] = response_entropy(it->second);
    }
  }
  report["entropy_bits"] = std::move(entropy);

  auto order = QuestionOrder::from(survey);
  std::vector<double> composites;
  for (const auto& [user, rs] : by_user) {
    try {
      composites.push_back(position_weighted_composite(rs, order).score);
    } catch (const InsufficientDataError&) {
      // every answer was a sentinel
    }
  }
  report["composite"] = to_json(summarize(composites));

  if (in.truth) {
    auto pairs = make_pairs(in.responses, *in.truth, survey);
    Json acc = Json::object();
    acc["n_pairs"] = pairs.size();
    if (pairs.empty()) {
      acc["macro_accuracy"] = nullptr;
      acc["exact_match_rate"] = nullptr;
    } else {
      auto per_user = accuracy_by_user(pairs);
      std::vector<double> values;
      for (const auto& [u, a] : per_user) values.push_back(a);
      acc["macro_accuracy"] = macro_accuracy(values);
      acc["exact_match_rate"] = exact_match_rate(pairs);
    }
    std::vector<EvaluationPair> ordinal;
    std::copy_if(pairs.begin(), pairs.end(), std::back_inserter(ordinal), [](const auto& p) { return p.ordinal; });
    try {
      acc["off_by_one_rate"] = off_by_one_rate(ordinal);
    } catch (const InsufficientDataError&) {
      acc["off_by_one_rate"] = nullptr;
    }

    Json users = Json::array();
    for (const auto& row : low_conf_vs_accuracy(in.responses, pairs)) {
      users.push_back(
          Json{{"user_id", row.user_id}, {"low_confidence_count", row.low_confidence_count}, {"accuracy", row.accuracy}});
    }
    acc["per_user"] = std::move(users);

    Json rows = Json::array();
    std::vector<double> logc, lowc, accs;
    for (const auto& row : trace_quality_table(in.bank, accuracy_by_user(pairs))) {
      rows.push_back(Json{{"user_id", row.user_id},
                          {"log_char_count", row.log_char_count},
                          {"low_conf_attribute_count", row.low_conf_attribute_count},
                          {"accuracy", row.accuracy},
                          {"platform", row.platform}});
      logc.push_back(row.log_char_count);
      lowc.push_back(static_cast<double>(row.low_conf_attribute_count));
      accs.push_back(row.accuracy);
    }
    Json tq = Json::object();
    tq["rows"] = std::move(rows);
    tq["slope_accuracy_on_log_char_count"] = accs.size() >= 2 ? Json(least_squares_slope(logc, accs)) : Json(nullptr);
    tq["slope_accuracy_on_low_conf_attributes"] =
        accs.size() >= 2 ? Json(least_squares_slope(lowc, accs)) : Json(nullptr);
    acc["trace_quality"] = std::move(tq);
    report["accuracy"] = std::move(acc);
  }
  return report;
}

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void flatten(const Json& j, const std::string& section, const std::string& key, std::string& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, section, key.empty() ? k : key + "." + k, out);
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], section, fmt::format("{}[{}]", key, i), out);
  } else {
    auto value = j.is_string() ? j.get<std::string>() : j.dump();
    out += fmt::format("{},{},{}\n", csv_field(section), csv_field(key), csv_field(value));
  }
}

}  // namespace

std::string diagnose_csv(const Json& report) {
  std::string out = "section,key,value\n";
  for (const auto& [section, v] : report.items()) {
    if (v.is_object() || v.is_array()) {
      flatten(v, section, "", out);
    } else {
      flatten(v, "summary", section, out);
    }
  }
  return out;
}

}  // namespace spirit
