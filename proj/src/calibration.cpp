#include "spirit/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>

namespace spirit {

EmptyCategoryError::EmptyCategoryError(std::string variable, std::string category)
    : DataError(fmt::format("no respondents in target category {}={}", variable, category)),
      variable_(std::move(variable)),
      category_(std::move(category)) {}

void check_targets(std::span<const MarginTarget> targets) {
  std::set<std::string> vars;
  for (const auto& t : targets) {
    if (!vars.insert(t.variable).second) throw InvalidTargetError(fmt::format("target '{}' repeated", t.variable));
    if (t.categories.empty()) throw InvalidTargetError(fmt::format("target '{}' has no categories", t.variable));
    std::set<std::string> cats;
    double sum = 0.0;
    for (const auto& [cat, p] : t.categories) {
      if (!cats.insert(cat).second) throw InvalidTargetError(fmt::format("target {}={} repeated", t.variable, cat));
      if (!(p > 0.0) || !std::isfinite(p)) {
        throw InvalidTargetError(fmt::format("target {}={} must be positive (got {})", t.variable, cat, p));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw InvalidTargetError(fmt::format("target '{}' sums to {:.12g}, not 1", t.variable, sum));
    }
  }
}

std::vector<MarginTarget> targets_from_json(const Json& j) {
  if (!j.is_object()) throw InvalidTargetError("targets: expected an object of variables");
  std::vector<MarginTarget> out;
  for (const auto& [var, cats] : j.items()) {
    if (!cats.is_object()) throw InvalidTargetError(fmt::format("targets: '{}' must map categories to shares", var));
    MarginTarget t{var, {}};
    for (const auto& [cat, p] : cats.items()) {
      if (!p.is_number()) throw InvalidTargetError(fmt::format("targets: {}={} is not a number", var, cat));
      t.categories.emplace_back(cat, p.get<double>());
    }
    out.push_back(std::move(t));
  }
  check_targets(out);
  return out;
}

Json to_json(std::span<const MarginTarget> targets) {
  Json j = Json::object();
  for (const auto& t : targets) {
    Json cats = Json::object();
    for (const auto& [cat, p] : t.categories) cats[cat] = p;
    j[t.variable] = std::move(cats);
  }
  return j;
}

std::vector<MarginTarget> load_targets(const std::filesystem::path& file) {
  auto j = parse_json(read_text_file(file));
  if (!j) throw DataError(fmt::format("{}: invalid JSON", file.string()));
  return targets_from_json(*j);
}

void RespondentFrame::add(std::string id, const std::map<std::string, std::string>& categories) {
  if (ids.empty() && columns.empty()) {
    for (const auto& [var, cat] : categories) columns[var];
  }
  for (auto& [var, col] : columns) {
    auto it = categories.find(var);
    if (it == categories.end()) throw DataError(fmt::format("respondent '{}' has no '{}' category", id, var));
    col.push_back(it->second);
  }
  ids.push_back(std::move(id));
}

std::optional<std::string> age_group(int age) {
  if (age < 18) return std::nullopt;
  if (age <= 29) return "18-29";
  if (age <= 44) return "30-44";
  if (age <= 64) return "45-64";
  return "65+";
}

std::optional<std::string> entry_category(const BankEntry& e, std::string_view variable) {
  if (auto it = e.attributes.find(std::string(variable)); it != e.attributes.end() && !it->second.empty()) {
    return it->second;
  }
  if (!e.demographics) return std::nullopt;
  if (variable == "age_group") {
    if (!e.demographics->age) return std::nullopt;
    return age_group(*e.demographics->age);
  }
  if (std::find(kDemographicFields.begin(), kDemographicFields.end(), variable) == kDemographicFields.end()) {
    return std::nullopt;
  }
  return demographic_value(*e.demographics, variable);
}

FrameBuild build_frame(std::span<const BankEntry> entries, std::span<const std::string> variables) {
  FrameBuild out;
  for (const auto& v : variables) out.frame.columns[v];
  for (const auto& e : entries) {
    std::map<std::string, std::string> cats;
    std::vector<std::string> missing;
    for (const auto& v : variables) {
      if (auto c = entry_category(e, v)) {
        cats[v] = *c;
      } else {
        missing.push_back(v);
      }
    }
    if (!missing.empty()) {
      out.excluded.push_back(e.user_id);
      std::string list;
      for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
      out.warnings.push_back(fmt::format("excluding '{}': no category for {}", e.user_id, list));
      continue;
    }
    out.frame.add(e.user_id, cats);
  }
  return out;
}

std::map<std::string, double> WeightVector::by_id() const {
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out[ids[i]] = weights[i];
  return out;
}

namespace {

// Category index per respondent for one target.
struct EncodedMargin {
  const MarginTarget* target;
  std::vector<int> cat;
  std::vector<double> share;
};

std::vector<EncodedMargin> encode(const RespondentFrame& frame, std::span<const MarginTarget> targets) {
  std::vector<EncodedMargin> out;
  for (const auto& t : targets) {
    auto col = frame.columns.find(t.variable);
    if (col == frame.columns.end()) throw DataError(fmt::format("frame has no variable '{}'", t.variable));
    std::map<std::string, int, std::less<>> index;
    EncodedMargin m{&t, {}, {}};
    for (const auto& [cat, p] : t.categories) {
      index.emplace(cat, static_cast<int>(m.share.size()));
      m.share.push_back(p);
    }
    m.cat.reserve(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) {
      auto it = index.find(col->second[i]);
      if (it == index.end()) {
        throw UnknownCategoryError(fmt::format("respondent '{}' has {}={}, which the targets do not list",
                                               frame.ids[i], t.variable, col->second[i]));
      }
      m.cat.push_back(it->second);
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

WeightVector rake(const RespondentFrame& frame, std::span<const MarginTarget> targets, const RakeOptions& opts) {
  if (frame.size() == 0) throw DegenerateFrameError("raking needs at least one respondent");
  if (!(opts.tol > 0.0)) throw UsageError("rake: tol must be positive");
  if (opts.max_iter < 1) throw UsageError("rake: max_iter must be >= 1");
  check_targets(targets);
  auto margins = encode(frame, targets);

  WeightVector w;
  w.ids = frame.ids;
  w.weights.assign(frame.size(), 1.0);

  std::vector<double> mass;
  std::vector<double> factor;
  for (const auto& m : margins) {
    mass.assign(m.share.size(), 0.0);
    kernels::category_mass(opts.execution, w.weights, m.cat, mass, opts.threads);
    for (std::size_t c = 0; c < mass.size(); ++c) {
      if (mass[c] <= 0.0) throw EmptyCategoryError(m.target->variable, m.target->categories[c].first);
    }
  }

  for (int it = 1; it <= opts.max_iter; ++it) {
    double cycle_max = 0.0;
    for (const auto& m : margins) {
      mass.assign(m.share.size(), 0.0);
      kernels::category_mass(opts.execution, w.weights, m.cat, mass, opts.threads);
      double total = 0.0;
      for (double x : mass) total += x;
      factor.resize(mass.size());
      double factor_dev = 0.0;
      for (std::size_t c = 0; c < mass.size(); ++c) {
        factor[c] = m.share[c] / (mass[c] / total);
        factor_dev = std::max(factor_dev, std::abs(factor[c] - 1.0));
      }
      double weight_dev = kernels::scale_by_category(opts.execution, w.weights, m.cat, factor, opts.threads);
      cycle_max = std::max(cycle_max, opts.criterion == Convergence::factor_delta ? factor_dev : weight_dev);
    }
    w.iterations = it;
    w.max_adjustment = cycle_max;
    if (cycle_max < opts.tol) {
      w.converged = true;
      break;
    }
  }
  return w;
}

WeightVector normalize(WeightVector w) {
  if (w.weights.empty()) return w;
  double sum = 0.0;
  for (double x : w.weights) {
    if (!(x > 0.0)) throw DataError("normalize: weights must be positive");
    sum += x;
  }
  const double mean = sum / static_cast<double>(w.weights.size());
  for (double& x : w.weights) x /= mean;
  return w;
}

std::map<std::string, std::map<std::string, double>> weighted_margins(const RespondentFrame& frame,
                                                                     std::span<const double> weights) {
  std::map<std::string, std::map<std::string, double>> out;
  double total = 0.0;
  for (double x : weights) total += x;
  for (const auto& [var, col] : frame.columns) {
    auto& dist = out[var];
    for (std::size_t i = 0; i < col.size(); ++i) dist[col[i]] += weights[i];
    for (auto& [cat, v] : dist) v /= total;
  }
  return out;
}

namespace {

double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

WeightDiagnostics weight_diagnostics(const WeightVector& w, double cap) {
  WeightDiagnostics d;
  d.n = w.weights.size();
  if (d.n == 0) return d;
  std::vector<double> sorted = w.weights;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double x : sorted) sum += x;
  d.mean = sum / static_cast<double>(d.n);
  double ss = 0.0;
  for (double x : sorted) ss += (x - d.mean) * (x - d.mean);
  d.sd = std::sqrt(ss / static_cast<double>(d.n));
  d.min = sorted.front();
  d.max = sorted.back();
  d.q1 = quantile_sorted(sorted, 0.25);
  d.median = quantile_sorted(sorted, 0.5);
  d.q3 = quantile_sorted(sorted, 0.75);
  d.iqr = d.q3 - d.q1;
  if (cap > 0.0 && d.max > cap) {
    d.warnings.push_back(fmt::format("largest weight {:.4g} exceeds cap {:.4g}", d.max, cap));
  }
  return d;
}

Json to_json(const WeightDiagnostics& d) {
  Json j = Json::object();
  j["n"] = d.n;
  j["mean"] = d.mean;
  j["sd"] = d.sd;
  j["min"] = d.min;
  j["q1"] = d.q1;
  j["median"] = d.median;
  j["q3"] = d.q3;
  j["iqr"] = d.iqr;
  j["max"] = d.max;
  j["warnings"] = d.warnings;
  return j;
}

namespace {

std::map<int, int> code_index(const SurveyQuestion& q) {
  std::map<int, int> idx;
  for (const auto& o : q.options) idx.emplace(o.code, static_cast<int>(idx.size()));
  return idx;
}

}  // namespace

std::map<int, double> weighted_distribution(std::span<const ResponseRecord> responses, const WeightVector& w,
                                            const SurveyQuestion& q, kernels::Execution execution) {
  auto idx = code_index(q);
  auto lookup = w.by_id();
  std::vector<double> ws;
  std::vector<int> cats;
  for (const auto& r : responses) {
    if (r.question_id != q.question_id) continue;
    auto it = lookup.find(r.user_id);
    if (it == lookup.end()) throw MissingWeightError(fmt::format("no weight for respondent '{}'", r.user_id));
    auto c = idx.find(r.value);
    if (c == idx.end()) throw DataError(fmt::format("{}: code {} is not an option", q.question_id, r.value));
    ws.push_back(it->second);
    cats.push_back(c->second);
  }
  if (ws.empty()) throw DataError(fmt::format("no responses to '{}'", q.question_id));
  std::vector<double> mass(idx.size(), 0.0);
  kernels::category_mass(execution, ws, cats, mass);
  double total = kernels::sum(execution, mass);
  std::map<int, double> out;
  for (const auto& [code, i] : idx) out[code] = mass[static_cast<std::size_t>(i)] / total;
  return out;
}

std::map<int, double> unweighted_distribution(std::span<const ResponseRecord> responses, const SurveyQuestion& q) {
  auto idx = code_index(q);
  std::vector<std::size_t> counts(idx.size(), 0);
  std::size_t n = 0;
  for (const auto& r : responses) {
    if (r.question_id != q.question_id) continue;
    auto c = idx.find(r.value);
    if (c == idx.end()) throw DataError(fmt::format("{}: code {} is not an option", q.question_id, r.value));
    ++counts[static_cast<std::size_t>(c->second)];
    ++n;
  }
  if (n == 0) throw DataError(fmt::format("no responses to '{}'", q.question_id));
  std::map<int, double> out;
  for (const auto& [code, i] : idx) {
    out[code] = static_cast<double>(counts[static_cast<std::size_t>(i)]) / static_cast<double>(n);
  }
  return out;
}

void write_weights_csv(const std::filesystem::path& file, const WeightVector& w) {
  std::string out = "respondent_id,weight\n";
  for (std::size_t i = 0; i < w.ids.size(); ++i) out += fmt::format("{},{:.17g}\n", w.ids[i], w.weights[i]);
  write_text_file(file, out);
}

WeightVector read_weights_csv(const std::filesystem::path& file) {
  WeightVector w;
  auto text = read_text_file(file);
  std::size_t lineno = 0;
  for (auto line : split_lines(text)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    if (lineno == 1 && line == "respondent_id,weight") continue;
    auto comma = line.rfind(',');
    if (comma == std::string_view::npos) throw DataError(fmt::format("{}:{}: expected id,weight", file.string(), lineno));
    std::string num(line.substr(comma + 1));
    char* end = nullptr;
    double v = std::strtod(num.c_str(), &end);
    if (end == num.c_str() || *end != '\0' || !(v > 0.0)) {
      throw DataError(fmt::format("{}:{}: bad weight '{}'", file.string(), lineno, num));
    }
    w.ids.emplace_back(line.substr(0, comma));
    w.weights.push_back(v);
  }
  w.converged = true;
  return w;
}

}  // namespace spirit
