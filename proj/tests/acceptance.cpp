// Acceptance run: one PASS/FAIL line per criterion. Exit status is the number of failures.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>

#include <fmt/format.h>

#include "spirit/calibration.hpp"
#include "spirit/metrics.hpp"
#include "spirit/painter.hpp"
#include "spirit/reasoner.hpp"
#include "spirit/synth_fixtures.hpp"
#include "test_support.hpp"

using namespace spirit;
namespace fs = std::filesystem;

namespace {

using Rules = std::vector<ScriptedMockBackend::Rule>;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome raking_oracle() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240101);
  constexpr int kFrames = 30;
  double worst_linf = 0.0, worst_margin = 0.0;
  int converged = 0;
  for (int i = 0; i < kFrames; ++i) {
    auto p = testkit::random_raking_problem(rng);
    RakeOptions tight;
    tight.tol = 1e-12;
    tight.max_iter = 100000;
    auto w = rake(p.frame, p.targets, tight);
    auto oracle = testkit::oracle_ipf(p.frame, p.targets);
    for (std::size_t k = 0; k < oracle.size(); ++k) worst_linf = std::max(worst_linf, std::abs(w.weights[k] - oracle[k]));

    auto paper = rake(p.frame, p.targets);  // tol 0.001, 50 cycles
    if (!paper.converged) continue;
    ++converged;
    auto m = weighted_margins(p.frame, paper.weights);
    for (const auto& t : p.targets) {
      for (const auto& [cat, share] : t.categories) {
        worst_margin = std::max(worst_margin, std::abs(m[t.variable][cat] - share));
      }
    }
  }
  const double secs = seconds_since(t0);
  o.require(worst_linf < 1e-6, fmt::format("L-inf {:.3g} >= 1e-6", worst_linf));
  o.require(worst_margin <= 0.005, fmt::format("margin error {:.3g} > 0.005", worst_margin));
  o.require(converged > 0, "no run converged under tol 0.001");
  o.require(secs < 5.0, fmt::format("took {:.2f}s", secs));
  if (o.pass) {
    o.detail = fmt::format("{} frames, max L-inf vs oracle {:.2e}, {}/{} converged at tol 0.001 with max margin "
                           "error {:.2e}, {:.2f}s",
                           kFrames, worst_linf, converged, kFrames, worst_margin, secs);
  }
  return o;
}

Outcome normalization() {
  Outcome o;
  std::mt19937_64 rng(777);
  std::vector<testkit::RakingProblem> fixtures;
  for (int i = 0; i < 30; ++i) fixtures.push_back(testkit::random_raking_problem(rng));
  {
    auto pop = synth::gen_population(7, 200, 4);
    auto entries = testkit::entries_for(pop);
    std::vector<std::string> vars;
    for (const auto& t : pop.targets) vars.push_back(t.variable);
    fixtures.push_back({build_frame(entries, vars).frame, pop.targets});
  }
  SurveyQuestion q;
  q.question_id = "q";
  q.options = {{1, "A"}, {2, "B"}, {3, "C"}, {4, "D"}, {98, "DK"}};
  q.sentinel_codes = {98};

  double worst_mean = 0.0, worst_ratio = 0.0;
  std::size_t shares = 0, identical = 0;
  for (const auto& f : fixtures) {
    auto raw = rake(f.frame, f.targets);
    auto norm = normalize(raw);
    double sum = 0.0;
    for (double x : norm.weights) sum += x;
    worst_mean = std::max(worst_mean, std::abs(sum / static_cast<double>(norm.weights.size()) - 1.0));

    std::vector<ResponseRecord> rs;
    for (const auto& id : raw.ids) {
      const auto pick = rng() % 5;
      rs.push_back({id, "q", pick == 4 ? 98 : 1 + static_cast<int>(pick)});
    }
    auto before = weighted_distribution(rs, raw, q);
    auto after = weighted_distribution(rs, norm, q);
    for (const auto& [code, share] : before) {
      ++shares;
      if (after.at(code) == share) ++identical;
      if (share > 0.0) worst_ratio = std::max(worst_ratio, std::abs(after.at(code) / share - 1.0));
      if (share == 0.0) o.require(after.at(code) == 0.0, "zero share changed");
    }
  }
  o.require(worst_mean <= 1e-9, fmt::format("mean off by {:.3g}", worst_mean));
  // Rescaling rounds each weight once, so shares agree to a few ulps rather than bitwise.
  o.require(worst_ratio <= 1e-14, fmt::format("share ratio off by {:.3g}", worst_ratio));
  if (o.pass) {
    o.detail = fmt::format("{} fixtures, max |mean-1| {:.2e}, max |after/before-1| {:.2e} ({}/{} shares bitwise equal)",
                           fixtures.size(), worst_mean, worst_ratio, identical, shares);
  }
  return o;
}

Outcome composite() {
  Outcome o;
  SurveySpec s;
  for (int i = 1; i <= 3; ++i) {
    SurveyQuestion q;
    q.question_id = fmt::format("q{}", i);
    q.options = {{1, "a"}, {2, "b"}, {3, "c"}};
    s.questions.push_back(q);
  }
  auto order = QuestionOrder::from(s);
  auto records = [](std::string user, std::vector<int> values) {
    std::vector<ResponseRecord> out;
    for (std::size_t i = 0; i < values.size(); ++i) out.push_back({user, fmt::format("q{}", i + 1), values[i]});
    return out;
  };
  const double v123 = position_weighted_composite(records("u", {1, 2, 3}), order).score;
  o.require(std::abs(v123 - 7.0 / 3.0) < 1e-15, fmt::format("(1,2,3) gave {:.17g}", v123));
  const double x = position_weighted_composite(records("a", {2, 3, 1}), order).score;
  const double y = position_weighted_composite(records("b", {2, 3, 1}), order).score;
  o.require(x == y, "identical sequences scored differently");
  const double c31 = position_weighted_composite(records("c", {3, 1}), order).score;
  const double c12 = position_weighted_composite(records("d", {1, 2}), order).score;
  o.require(c31 == c12 && std::abs(c31 - 5.0 / 3.0) < 1e-15,
            fmt::format("(3,1) -> {:.17g}, (1,2) -> {:.17g}", c31, c12));
  if (o.pass) o.detail = fmt::format("(1,2,3) -> {:.15g}; (3,1) and (1,2) both -> {:.15g}", v123, c31);
  return o;
}

Outcome metrics() {
  Outcome o;
  std::vector<int> uniform4 = {1, 2, 3, 4}, degenerate = {2, 2, 2, 2}, half = {1, 1, 2, 3};
  const double h4 = response_entropy(uniform4), h0 = response_entropy(degenerate), h15 = response_entropy(half);
  o.require(std::abs(h4 - 2.0) <= 1e-12, fmt::format("uniform-4 {:.17g}", h4));
  o.require(std::abs(h0) <= 1e-12, fmt::format("degenerate {:.17g}", h0));
  o.require(std::abs(h15 - 1.5) <= 1e-12, fmt::format("(1/2,1/4,1/4) {:.17g}", h15));

  std::mt19937_64 rng(99);
  double worst_sum = 0.0;
  int evaluated = 0;
  // Sets holding only sentinel answers have no ordinal rate; draw until 1000 sets were scored.
  while (evaluated < 1000) {
    std::vector<EvaluationPair> pairs;
    const auto n = 1 + rng() % 30;
    for (std::size_t i = 0; i < n; ++i) {
      auto code = [&] { return rng() % 8 == 0 ? 98 : 1 + static_cast<int>(rng() % 5); };
      pairs.push_back({"u", "q", code(), code(), true, {1, 2, 3, 4, 5}, {98}});
    }
    try {
      worst_sum = std::max(worst_sum, ordinal_exact_rate(pairs) + off_by_one_rate(pairs));
      ++evaluated;
    } catch (const InsufficientDataError&) {
    }
  }
  o.require(worst_sum <= 1.0, fmt::format("exact + off-by-one reached {:.17g}", worst_sum));

  double worst_macro = 0.0;
  for (int bank = 0; bank < 20; ++bank) {
    auto pop = synth::gen_population(1000 + static_cast<std::uint64_t>(bank), 25, 8);
    std::vector<ResponseRecord> rs;
    for (const auto& t : pop.truth) {
      const auto* q = pop.model.survey.find(t.question_id);
      auto codes = q->scale_codes();
      // Keep most self-reports, replace the rest with a random code.
      int v = rng() % 3 == 0 ? codes[rng() % codes.size()] : t.value;
      rs.push_back({t.user_id, t.question_id, v});
    }
    auto pairs = make_pairs(rs, pop.truth, pop.model.survey);
    std::vector<double> per;
    for (const auto& [u, a] : accuracy_by_user(pairs)) per.push_back(a);
    const double macro = macro_accuracy(per);
    std::map<std::string, std::pair<double, double>> tally;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      tally[rs[i].user_id].first += rs[i].value == pop.truth[i].value ? 1.0 : 0.0;
      tally[rs[i].user_id].second += 1.0;
    }
    double flat = 0.0;
    for (const auto& [u, t] : tally) flat += t.first / t.second;
    flat /= static_cast<double>(tally.size());
    worst_macro = std::max(worst_macro, std::abs(macro - flat));
  }
  o.require(worst_macro <= 1e-15, fmt::format("macro vs recount {:.3g}", worst_macro));
  if (o.pass) {
    o.detail = fmt::format("entropies {:.15g}/{:.15g}/{:.15g}; max exact+off-by-one {:.4f} over {} sets; macro "
                           "recount diff {:.1e}",
                           h4, h0, h15, worst_sum, evaluated, worst_macro);
  }
  return o;
}

Outcome retry_contract() {
  Outcome o;
  Validator<int> accept = [](std::string_view text) {
    return text == "valid" ? Validated<int>::success(1)
                           : Validated<int>::failure({{"$", ViolationKind::parse_error, std::string(text)}});
  };
  std::string seen;
  for (int k = 0; k <= 9; ++k) {
    std::vector<std::string> script(static_cast<std::size_t>(k), "invalid");
    script.push_back("valid");
    ScriptedMockBackend backend(Rules{{"", script}});
    auto r = complete_structured<int>({"system", "user"}, backend, accept);
    o.require(r.receipt.attempts == k + 1, fmt::format("k={} gave attempts={}", k, r.receipt.attempts));
    seen += fmt::format("{}{}", k ? "," : "", r.receipt.attempts);
  }
  ScriptedMockBackend never(Rules{{"", {"invalid"}}});
  int attempts = -1;
  try {
    complete_structured<int>({"system", "user"}, never, accept);
  } catch (const StructuredFailure& e) {
    attempts = e.attempts();
  }
  o.require(attempts == 10, fmt::format("always-failing gave attempts={}", attempts));
  o.require(never.calls() == 10, fmt::format("always-failing made {} calls", never.calls()));
  if (o.pass) o.detail = fmt::format("attempts for k=0..9: {}; always-failing -> StructuredFailure(attempts=10)", seen);
  return o;
}

Outcome schema_gate() {
  Outcome o;
  auto corpus = testkit::persona_mutations();
  std::size_t rejected = 0, named = 0;
  for (const auto& m : corpus) {
    auto r = parse_artifact(m.text);
    if (!r.ok()) ++rejected;
    bool found = std::any_of(r.violations.begin(), r.violations.end(),
                             [&](const Violation& v) { return v.path == m.path && v.kind == m.kind; });
    if (found) ++named;
    o.require(!r.ok() && found, fmt::format("'{}' -> {}", m.name, r.ok() ? "accepted" : describe(r.violations)));
  }
  o.require(corpus.size() >= 30, "corpus smaller than 30");
  auto p = testkit::canonical_profile();
  auto text = serialize_artifact(p);
  auto back = parse_artifact(text);
  o.require(back.ok() && *back.value == p && serialize_artifact(*back.value) == text, "canonical round trip");
  if (o.pass) {
    o.detail = fmt::format("{}/{} mutations rejected, {}/{} with the expected violation; canonical artifact "
                           "round-trips byte for byte",
                           rejected, corpus.size(), named, corpus.size());
  }
  return o;
}

struct PipelineRun {
  std::map<std::string, std::string> files;
  double seconds = 0.0;
  std::string error;
};

PipelineRun run_pipeline(int jobs) {
  PipelineRun out;
  testkit::TempDir dir("spirit-e2e");
  testkit::ScopedEnv epoch("SOURCE_DATE_EPOCH", "1700000000");
  const auto t0 = std::chrono::steady_clock::now();
  const std::string fx = (dir / "fx").string(), bank = (dir / "bank").string(), j = std::to_string(jobs);
  auto step = [&](std::vector<std::string> args, const std::string& capture) {
    if (!out.error.empty()) return;
    auto r = testkit::run_cli(args);
    if (r.code != 0) {
      out.error = fmt::format("{} exited {}: {}", args[0], r.code, r.err);
      return;
    }
    if (!capture.empty()) out.files["stdout/" + capture] = r.out;
  };
  step({"synth", "--out", fx, "--seed", "2024", "--users", "20", "--questions", "10"}, "");
  step({"paint", "--posts", fx + "/posts_reddit.jsonl", fx + "/posts_twitter.jsonl", "--bank", bank, "--backend",
        fx + "/backend.json", "--demographics", fx + "/panel.jsonl", "--jobs", j},
       "paint");
  step({"survey", "--bank", bank, "--survey", fx + "/survey.json", "--protocol", "direct", "--backend",
        fx + "/backend.json", "--jobs", j},
       "survey");
  step({"weigh", "--bank", bank, "--targets", fx + "/targets.json", "--name", "w", "--jobs", j}, "weigh");
  step({"aggregate", "--bank", bank, "--run", "r0001-synth-direct", "--weights", "w", "--jobs", j}, "aggregate");
  step({"diagnose", "--bank", bank, "--run", "r0001-synth-direct", "--truth", fx + "/truth.jsonl"}, "diagnose");
  out.seconds = seconds_since(t0);
  if (out.error.empty()) {
    for (auto& [k, v] : testkit::snapshot(dir.path())) out.files[k] = std::move(v);
  }
  return out;
}

std::string first_difference(const PipelineRun& a, const PipelineRun& b) {
  for (const auto& [k, v] : a.files) {
    auto it = b.files.find(k);
    if (it == b.files.end()) return k + " missing";
    if (it->second != v) return k + " differs";
  }
  if (a.files.size() != b.files.size()) return "file sets differ";
  return {};
}

Outcome end_to_end() {
  Outcome o;
  auto a = run_pipeline(1);
  auto b = run_pipeline(1);
  auto c = run_pipeline(8);
  for (const auto* r : {&a, &b, &c}) o.require(r->error.empty(), r->error);
  if (!o.pass) return o;
  const double slowest = std::max({a.seconds, b.seconds, c.seconds});
  o.require(slowest < 60.0, fmt::format("slowest run {:.2f}s", slowest));
  auto ab = first_difference(a, b);
  auto ac = first_difference(a, c);
  o.require(ab.empty(), "repeat run: " + ab);
  o.require(ac.empty(), "--jobs 1 vs 8: " + ac);
  if (o.pass) {
    o.detail = fmt::format("{} output files identical across two runs and --jobs 1/8; slowest run {:.2f}s",
                           a.files.size(), slowest);
  }
  return o;
}

// Entropy of the planted answers, counted directly from the truth table.
double planted_entropy(const std::vector<TruthRecord>& truth, const std::string& qid) {
  std::map<int, double> counts;
  double n = 0.0;
  for (const auto& t : truth) {
    if (t.question_id != qid) continue;
    counts[t.value] += 1.0;
    n += 1.0;
  }
  double h = 0.0;
  for (const auto& [v, c] : counts) h += c / n * std::log2(n / c);
  return h;
}

Outcome construction_oracle() {
  Outcome o;
  auto pop = synth::gen_population(31337, 40, 10);
  synth::MarkerMockBackend backend(pop.model, 31337);
  std::vector<BankEntry> entries;
  for (const auto& [user, posts] : group_by_user(pop.posts)) {
    auto doc = build_document(posts);
    BankEntry e;
    e.user_id = user;
    e.platforms = doc.platforms;
    e.profile = spirit::paint(doc, backend).profile;
    e.trace = trace_features(doc);
    entries.push_back(std::move(e));
  }
  SurveyRunOptions opts;
  opts.jobs = 4;
  auto run = run_survey(entries, pop.model.survey, backend, opts);
  o.require(run.failures.empty(), fmt::format("{} failures", run.failures.size()));
  auto pairs = make_pairs(run.responses, pop.truth, pop.model.survey);
  std::vector<double> per;
  for (const auto& [u, a] : accuracy_by_user(pairs)) per.push_back(a);
  const double macro = macro_accuracy(per);
  o.require(macro == 1.0 && pairs.size() == pop.truth.size(), fmt::format("macro accuracy {:.6f}", macro));
  double worst = 0.0;
  for (const auto& q : pop.model.survey.questions) {
    std::vector<ResponseRecord> mine;
    for (const auto& r : run.responses) {
      if (r.question_id == q.question_id) mine.push_back(r);
    }
    worst = std::max(worst, std::abs(response_entropy(mine) - planted_entropy(pop.truth, q.question_id)));
  }
  o.require(worst <= 1e-9, fmt::format("entropy off by {:.3g}", worst));
  if (o.pass) {
    o.detail = fmt::format("{} users x {} questions: macro accuracy {:.1f}, max entropy gap {:.1e}", entries.size(),
                           pop.model.survey.questions.size(), macro, worst);
  }
  return o;
}

Outcome timely_ordering() {
  Outcome o;
  auto pop = synth::gen_population(8080, 20, 6);
  for (std::size_t i = 0; i < pop.model.survey.questions.size(); ++i) {
    pop.model.survey.questions[i].topic = i % 2 == 0 ? "transit funding" : "school budgets";
  }
  auto entries = testkit::entries_for(pop);
  synth::MarkerMockBackend backend(pop.model, 8080);
  FixtureSearch fixture(pop.search_fixture);

  InstrumentedSearch idle(fixture);
  SurveyRunOptions direct;
  direct.search = &idle;
  direct.jobs = 4;
  auto d = run_survey(entries, pop.model.survey, backend, direct);
  o.require(idle.calls() == 0, fmt::format("direct made {} search calls", idle.calls()));
  o.require(d.failures.empty(), "direct run had failures");

  std::size_t expected_calls = 0, pairs = 0, bad_pairs = 0;
  for (const auto& e : entries) {
    for (std::string topic : {"transit funding", "school budgets"}) {
      InstrumentedSearch counted(fixture);
      auto trace = acquire_context(e, topic, backend, counted);
      const auto nq = trace.queries().size();
      ++pairs;
      if (nq < 3 || nq > 5 || counted.calls() != nq || counted.results() != 5 * nq || trace.results().size() != 5 * nq) {
        ++bad_pairs;
      }
      expected_calls += nq;
    }
  }
  o.require(bad_pairs == 0, fmt::format("{} of {} (user, topic) traces broke the fetch count", bad_pairs, pairs));

  InstrumentedSearch counted(fixture);
  SurveyRunOptions timely;
  timely.protocol = Protocol::timely;
  timely.search = &counted;
  timely.jobs = 4;
  auto t = run_survey(entries, pop.model.survey, backend, timely);
  o.require(t.failures.empty(), "timely run had failures");
  o.require(counted.calls() == expected_calls,
            fmt::format("timely survey made {} calls, expected {}", counted.calls(), expected_calls));
  o.require(counted.results() == 5 * counted.calls(), "results are not top-5 per call");
  std::size_t flagged = 0;
  for (const auto& r : t.responses) flagged += r.influenced_by_search.has_value() ? 1 : 0;
  o.require(!t.responses.empty() && flagged == t.responses.size(),
            fmt::format("influenced_by_search on {}/{} records", flagged, t.responses.size()));
  if (o.pass) {
    o.detail = fmt::format("direct: 0 search calls; timely: {} (user, topic) traces with 3-5 queries x 5 results "
                           "({} calls, {} results); influenced_by_search on {}/{} records",
                           pairs, counted.calls(), counted.results(), flagged, t.responses.size());
  }
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"raking matches brute-force IPF oracle", raking_oracle},
      {"normalization keeps mean 1 and distributions", normalization},
      {"position-weighted composite", composite},
      {"entropy, ordinal rates, macro accuracy", metrics},
      {"retry contract", retry_contract},
      {"persona schema gate", schema_gate},
      {"end-to-end determinism", end_to_end},
      {"construction-oracle recovery", construction_oracle},
      {"timely protocol ordering", timely_ordering},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = fmt::format("threw: {}", e.what());
    }
    failures += o.pass ? 0 : 1;
    std::cout << fmt::format("{} [{}] {}: {}", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail)
              << std::endl;
  }
  return failures;
}
