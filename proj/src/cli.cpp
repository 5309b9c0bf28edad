#include "spirit/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "spirit/backends.hpp"
#include "spirit/bank_store.hpp"
#include "spirit/calibration.hpp"
#include "spirit/corpus.hpp"
#include "spirit/metrics.hpp"
#include "spirit/painter.hpp"
#include "spirit/reasoner.hpp"
#include "spirit/search.hpp"
#include "spirit/synth_fixtures.hpp"

namespace spirit::cli {

namespace fs = std::filesystem;

namespace {

int default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

std::optional<Platform> platform_arg(const std::string& s) {
  if (s.empty() || s == "all") return std::nullopt;
  auto p = parse_platform(s);
  if (!p) throw UsageError(fmt::format("--platform: expected reddit, twitter or all (got '{}')", s));
  return p;
}

void write_or_print(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    write_text_file(path, text);
  }
}

// paint -----------------------------------------------------------------

struct PaintArgs {
  std::vector<std::string> posts;
  std::string bank;
  std::string backend;
  std::string demographics;
  std::string platform;
  bool repaint = false;
  int jobs = default_jobs();
  std::size_t max_chars = 0;
};

struct PaintSlot {
  enum class State { cached, painted, failed } state = State::failed;
  UserDocument doc;
  std::optional<PaintResult> result;
  SurveyFailure failure;
  bool stale = false;  // cached persona came from another backend or document
};

int cmd_paint(const PaintArgs& a, std::ostream& out, std::ostream& err) {
  auto cfg = load_backend_config(a.backend);
  auto backend = make_backend(cfg);
  auto only = platform_arg(a.platform);

  std::vector<Post> posts;
  for (const auto& f : a.posts) {
    auto batch = read_posts_jsonl(f);
    for (auto& p : batch) {
      if (!only || p.platform == *only) posts.push_back(std::move(p));
    }
  }
  std::map<std::string, PanelRecord> panel;
  if (!a.demographics.empty()) panel = load_panel(a.demographics);

  BankStore store(a.bank);
  auto grouped = group_by_user(posts);
  std::vector<std::pair<std::string, std::vector<Post>>> users(grouped.begin(), grouped.end());
  const auto fingerprint = BackendFingerprint::parse(cfg.fingerprint());
  std::vector<std::optional<BankEntry>> existing;
  for (const auto& [user, _] : users) {
    check_user_id(user);
    existing.push_back(store.get_entry(user));
  }

  DocumentOptions doc_opts;
  doc_opts.max_chars = a.max_chars;
  auto policy = RetryPolicy::from(cfg);
  std::vector<PaintSlot> slots(users.size());
  const auto n = static_cast<std::ptrdiff_t>(users.size());

#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, a.jobs))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto& slot = slots[i];
    const auto& user = users[i].first;
    try {
      slot.doc = build_document(users[i].second, doc_opts);
      const auto& prior = existing[i];
      if (prior && !a.repaint) {
        slot.state = PaintSlot::State::cached;
        slot.stale = prior->backend != fingerprint || prior->trace != trace_features(slot.doc);
        continue;
      }
      slot.result = paint(slot.doc, *backend, policy, cfg.painter_temperature);
      slot.state = PaintSlot::State::painted;
    } catch (const PaintFailure& f) {
      slot.failure = {user, "", "paint", f.cause().attempts(), f.what(), f.cause().last_violations()};
    } catch (const std::exception& e) {
      slot.failure = {user, "", "paint", 0, e.what(), {}};
    }
  }

  std::size_t painted = 0, cached = 0;
  std::vector<Json> failures;
  std::vector<int> attempts;
  const auto now = now_or_source_date();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto& slot = slots[i];
    const auto& user = users[i].first;
    if (slot.state == PaintSlot::State::cached) {
      if (slot.stale) err << fmt::format("warning: {}: cached persona differs in backend or posts; use --repaint\n", user);
      ++cached;
      continue;
    }
    if (slot.state == PaintSlot::State::failed) {
      failures.push_back(to_json(slot.failure));
      if (slot.failure.attempts > 0) attempts.push_back(slot.failure.attempts);
      continue;
    }
    BankEntry e;
    e.user_id = user;
    e.platforms = slot.doc.platforms;
    if (auto it = panel.find(user); it != panel.end()) {
      e.demographics = it->second.demographics;
      e.attributes = it->second.attributes;
    }
    e.profile = slot.result->profile;
    e.painted_at = now;
    e.backend = fingerprint;
    e.trace = trace_features(slot.doc);
    try {
      auto version = store.put_entry(e, a.repaint);
      store.put_document(slot.doc);
      Json receipt = Json::object();
      receipt["stage"] = "paint";
      receipt["user_id"] = user;
      receipt["version"] = version;
      receipt["backend"] = fingerprint.str();
      receipt["attempts"] = slot.result->receipt.attempts;
      receipt["input_tokens"] = slot.result->receipt.input_tokens;
      receipt["output_tokens"] = slot.result->receipt.output_tokens;
      receipt["timestamp"] = format_iso8601(now);
      store.append_receipt(receipt);
      for (const auto& w : slot.result->warnings) err << fmt::format("warning: {}: {}\n", user, w);
      attempts.push_back(slot.result->receipt.attempts);
      ++painted;
    } catch (const DataError& ex) {
      failures.push_back(to_json(SurveyFailure{user, "", "store", 0, ex.what(), {}}));
    }
  }

  std::string fail_text;
  for (const auto& f : failures) fail_text += f.dump() + "\n";
  write_text_file(fs::path(a.bank) / "failures.jsonl", fail_text);

  double mean = 0.0;
  int max = 0;
  for (int x : attempts) {
    mean += x;
    max = std::max(max, x);
  }
  if (!attempts.empty()) mean /= static_cast<double>(attempts.size());
  out << fmt::format("users {} painted {} cached {} failed {}\n", users.size(), painted, cached, failures.size());
  out << fmt::format("attempts mean {:.2f} max {}\n", mean, max);
  if (painted == 0 && cached == 0 && !failures.empty()) return kExitBackend;
  return kExitOk;
}

// survey ----------------------------------------------------------------

struct SurveyArgs {
  std::string bank;
  std::string survey;
  std::string protocol = "direct";
  std::string backend;
  std::string search;
  std::string mode = "external";
  std::string platform;
  bool with_demographics = false;
  bool no_demographics = false;
  int jobs = default_jobs();
};

int cmd_survey(const SurveyArgs& a, std::ostream& out, std::ostream& err) {
  auto protocol = parse_protocol(a.protocol);
  if (!protocol) throw UsageError(fmt::format("--protocol: expected direct, timely or demographic (got '{}')", a.protocol));
  if (*protocol == Protocol::timely && a.search.empty()) throw UsageError("--protocol timely requires --search <cfg>");
  if (a.mode != "external" && a.mode != "evaluation") throw UsageError("--mode: expected external or evaluation");
  if (a.with_demographics && a.no_demographics) throw UsageError("--with-demographics conflicts with --no-demographics");

  auto cfg = load_backend_config(a.backend);
  auto backend = make_backend(cfg);
  auto survey = load_survey(a.survey);
  std::unique_ptr<SearchBackend> search_inner;
  std::optional<InstrumentedSearch> search;
  if (!a.search.empty()) {
    search_inner = load_search_backend(a.search);
    search.emplace(*search_inner);
  }

  BankStore store(a.bank);
  auto entries = store.list_entries(platform_arg(a.platform));
  if (entries.empty()) throw DataError(fmt::format("bank {} has no entries", a.bank));

  SurveyRunOptions opts;
  opts.protocol = *protocol;
  opts.jobs = std::max(1, a.jobs);
  opts.reasoner.temperature = cfg.reasoner_temperature;
  opts.reasoner.policy = RetryPolicy::from(cfg);
  opts.reasoner.include_demographics = a.with_demographics || (!a.no_demographics && a.mode == "external");
  if (*protocol == Protocol::timely) opts.search = &*search;

  auto result = run_survey(entries, survey, *backend, opts);

  RunManifest m;
  m.survey_id = survey.survey_id;
  m.protocol = *protocol;
  m.backend = BackendFingerprint::parse(cfg.fingerprint());
  m.timestamp = now_or_source_date();
  m.extra["mode"] = a.mode;
  m.extra["demographics_included"] = opts.reasoner.include_demographics;
  m.extra["platform"] = a.platform.empty() ? "all" : a.platform;
  m.extra["attempts"] = result.attempts;
  m.extra["input_tokens"] = result.input_tokens;
  m.extra["output_tokens"] = result.output_tokens;
  m.extra["traces"] = result.traces;
  m.extra["search_calls"] = search ? search->calls() : 0;
  m.extra["search_results"] = search ? search->results() : 0;
  std::vector<Json> failures;
  for (const auto& f : result.failures) failures.push_back(to_json(f));
  auto run_id = store.record_run(m, survey, result.responses, failures);

  for (const auto& f : result.failures) {
    err << fmt::format("failure: {} {} {}: {}\n", f.user_id, f.question_id, f.stage, f.message);
  }
  out << run_id << "\n";
  if (result.responses.empty() && !result.failures.empty()) return kExitBackend;
  return kExitOk;
}

// weigh -----------------------------------------------------------------

struct WeighArgs {
  std::string bank;
  std::string targets;
  std::string out;
  std::string name;
  std::string platform;
  std::string criterion = "factor";
  double tol = 0.001;
  int max_iter = 50;
  double cap = 10.0;
  int jobs = default_jobs();
};

int cmd_weigh(const WeighArgs& a, std::ostream& out, std::ostream& err) {
  if (a.out.empty() && a.name.empty()) throw UsageError("weigh needs --out <csv> or --name <name>");
  if (a.criterion != "factor" && a.criterion != "weight") throw UsageError("--criterion: expected factor or weight");
  auto targets = load_targets(a.targets);
  BankStore store(a.bank, BankStore::Mode::read);
  auto entries = store.list_entries(platform_arg(a.platform));

  std::vector<std::string> vars;
  for (const auto& t : targets) vars.push_back(t.variable);
  auto built = build_frame(entries, vars);
  for (const auto& w : built.warnings) err << "warning: " << w << "\n";

  RakeOptions opts;
  opts.tol = a.tol;
  opts.max_iter = a.max_iter;
  opts.criterion = a.criterion == "factor" ? Convergence::factor_delta : Convergence::weight_delta;
  opts.threads = std::max(1, a.jobs);
  auto raw = rake(built.frame, targets, opts);
  auto w = normalize(raw);

  if (!a.out.empty()) write_weights_csv(a.out, w);
  if (!a.name.empty()) write_weights_csv(store.weights_path(a.name), w);

  auto diag = weight_diagnostics(w, a.cap);
  for (const auto& msg : diag.warnings) err << "warning: " << msg << "\n";
  if (!raw.converged) err << fmt::format("warning: raking did not converge in {} cycles\n", raw.iterations);

  Json report = Json::object();
  report["n"] = w.weights.size();
  report["excluded"] = built.excluded;
  report["iterations"] = raw.iterations;
  report["converged"] = raw.converged;
  report["max_adjustment"] = raw.max_adjustment;
  report["diagnostics"] = to_json(diag);
  Json margins = Json::object();
  auto achieved = weighted_margins(built.frame, w.weights);
  for (const auto& t : targets) {
    Json cats = Json::object();
    for (const auto& [cat, share] : t.categories) {
      cats[cat] = Json{{"target", share}, {"weighted", achieved[t.variable][cat]}};
    }
    margins[t.variable] = std::move(cats);
  }
  report["margins"] = std::move(margins);
  out << report.dump(2) << "\n";
  return kExitOk;
}

// aggregate -------------------------------------------------------------

struct AggregateArgs {
  std::string bank;
  std::string run;
  std::string weights;
  std::string out;
  bool unweighted = false;
  int jobs = default_jobs();
};

int cmd_aggregate(const AggregateArgs& a, std::ostream& out, std::ostream&) {
  if (a.unweighted == !a.weights.empty()) throw UsageError("aggregate needs exactly one of --weights or --unweighted");
  BankStore store(a.bank, BankStore::Mode::read);
  auto run = store.load_run(a.run);
  if (run.responses.empty()) throw DataError(fmt::format("run {} has no responses", a.run));

  std::optional<WeightVector> w;
  if (!a.unweighted) {
    fs::path p = a.weights;
    if (!fs::exists(p) && p.extension().empty()) p = store.weights_path(a.weights);
    w = read_weights_csv(p);
  }

  Json questions = Json::array();
  for (const auto& q : run.survey.questions) {
    std::size_t n = std::count_if(run.responses.begin(), run.responses.end(),
                                  [&](const auto& r) { return r.question_id == q.question_id; });
    Json row = Json::object();
    row["question_id"] = q.question_id;
    row["n"] = n;
    if (n == 0) {
      row["distribution"] = nullptr;
    } else {
      auto dist = w ? weighted_distribution(run.responses, *w, q) : unweighted_distribution(run.responses, q);
      Json d = Json::object();
      for (const auto& [code, share] : dist) d[std::to_string(code)] = share;
      row["distribution"] = std::move(d);
    }
    questions.push_back(std::move(row));
  }
  Json report = Json::object();
  report["run_id"] = a.run;
  report["survey_id"] = run.survey.survey_id;
  report["protocol"] = std::string(to_string(run.manifest.protocol));
  report["weighted"] = w.has_value();
  report["questions"] = std::move(questions);
  write_or_print(a.out, report.dump(2) + "\n", out);
  return kExitOk;
}

// diagnose --------------------------------------------------------------

struct DiagnoseArgs {
  std::string bank;
  std::string run;
  std::string truth;
  std::string out;
  std::string csv;
};

int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out, std::ostream&) {
  BankStore store(a.bank, BankStore::Mode::read);
  auto run = store.load_run(a.run);
  auto bank = store.list_entries();
  std::vector<TruthRecord> truth;
  DiagnoseInput in;
  in.survey = &run.survey;
  in.responses = run.responses;
  in.bank = bank;
  if (!a.truth.empty()) {
    truth = load_truth(a.truth);
    in.truth = std::span<const TruthRecord>(truth);
  }
  auto report = diagnose_report(in);
  report["run_id"] = a.run;
  write_or_print(a.out, report.dump(2) + "\n", out);
  if (!a.csv.empty()) write_text_file(a.csv, diagnose_csv(report));
  return kExitOk;
}

// synth -----------------------------------------------------------------

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 1;
  int users = 20;
  int questions = 10;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream&) {
  auto pop = synth::gen_population(a.seed, a.users, a.questions);
  auto files = synth::write_population(pop, a.out);
  out << fmt::format("wrote {} users, {} questions, {} posts to {}\n", a.users, a.questions, pop.posts.size(),
                     fs::path(a.out).string());
  (void)files;
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"spirit: persona inference, survey simulation and calibration"};
  app.name("spirit");
  app.require_subcommand(1);

  PaintArgs pa;
  auto* paint_cmd = app.add_subcommand("paint", "Infer persona profiles for every user in the post files");
  paint_cmd->add_option("--posts", pa.posts, "Post JSONL files (one or more)")->required()->expected(1, -1);
  paint_cmd->add_option("--bank", pa.bank, "Bank directory")->required();
  paint_cmd->add_option("--backend", pa.backend, "Backend config JSON")->required();
  paint_cmd->add_option("--demographics", pa.demographics, "Panel JSONL with demographics and raking attributes");
  paint_cmd->add_option("--platform", pa.platform, "Build a single-platform bank: reddit, twitter or all");
  paint_cmd->add_option("--max-chars", pa.max_chars, "Drop oldest posts beyond this many characters (0 = no limit)");
  paint_cmd->add_option("--jobs", pa.jobs, "Users painted in parallel")->check(CLI::PositiveNumber);
  paint_cmd->add_flag("--repaint", pa.repaint, "Repaint users that already have a persona");

  SurveyArgs sa;
  auto* survey_cmd = app.add_subcommand("survey", "Field a survey against the bank and record a run");
  survey_cmd->add_option("--bank", sa.bank, "Bank directory")->required();
  survey_cmd->add_option("--survey", sa.survey, "Survey spec JSON")->required();
  survey_cmd->add_option("--protocol", sa.protocol, "direct | timely | demographic");
  survey_cmd->add_option("--backend", sa.backend, "Backend config JSON")->required();
  survey_cmd->add_option("--search", sa.search, "Search backend config JSON (required for timely)");
  survey_cmd->add_option("--mode", sa.mode,
                         "external (demographics shown by default) | evaluation (demographics hidden by default)");
  survey_cmd->add_flag("--with-demographics", sa.with_demographics, "Always show demographics to the reasoner");
  survey_cmd->add_flag("--no-demographics", sa.no_demographics, "Never show demographics to the reasoner");
  survey_cmd->add_option("--platform", sa.platform, "Survey only entries from this platform");
  survey_cmd->add_option("--jobs", sa.jobs, "Users surveyed in parallel")->check(CLI::PositiveNumber);

  WeighArgs wa;
  auto* weigh_cmd = app.add_subcommand("weigh", "Rake bank respondents to margin targets");
  weigh_cmd->add_option("--bank", wa.bank, "Bank directory")->required();
  weigh_cmd->add_option("--targets", wa.targets, "Targets JSON {variable: {category: share}}")->required();
  weigh_cmd->add_option("--out", wa.out, "Weights CSV to write");
  weigh_cmd->add_option("--name", wa.name, "Also store as <bank>/weights/<name>.csv");
  weigh_cmd->add_option("--platform", wa.platform, "Restrict to one platform's entries");
  weigh_cmd->add_option("--tol", wa.tol, "Convergence tolerance");
  weigh_cmd->add_option("--max-iter", wa.max_iter, "Maximum raking cycles");
  weigh_cmd->add_option("--criterion", wa.criterion, "factor (max |T/P - 1|) | weight (max weight change)");
  weigh_cmd->add_option("--cap", wa.cap, "Warn when a normalized weight exceeds this (0 = off)");
  weigh_cmd->add_option("--jobs", wa.jobs, "Threads for margin accumulation")->check(CLI::PositiveNumber);

  AggregateArgs aa;
  auto* agg_cmd = app.add_subcommand("aggregate", "Response distribution per question for a run");
  agg_cmd->add_option("--bank", aa.bank, "Bank directory")->required();
  agg_cmd->add_option("--run", aa.run, "Run id")->required();
  agg_cmd->add_option("--weights", aa.weights, "Weights CSV (or a name under <bank>/weights)");
  agg_cmd->add_flag("--unweighted", aa.unweighted, "Use unit weights");
  agg_cmd->add_option("--out", aa.out, "Write the report here instead of stdout");
  agg_cmd->add_option("--jobs", aa.jobs, "Threads")->check(CLI::PositiveNumber);

  DiagnoseArgs da;
  auto* diag_cmd = app.add_subcommand("diagnose", "Metric report for a run");
  diag_cmd->add_option("--bank", da.bank, "Bank directory")->required();
  diag_cmd->add_option("--run", da.run, "Run id")->required();
  diag_cmd->add_option("--truth", da.truth, "Self-report JSONL; adds the accuracy section");
  diag_cmd->add_option("--out", da.out, "Write the JSON report here instead of stdout");
  diag_cmd->add_option("--csv", da.csv, "Also write a flat CSV of the report");

  SynthArgs ya;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic fixture population");
  synth_cmd->add_option("--out", ya.out, "Output directory")->required();
  synth_cmd->add_option("--seed", ya.seed, "Generator seed");
  synth_cmd->add_option("--users", ya.users, "Number of users")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--questions", ya.questions, "Number of questions")->check(CLI::NonNegativeNumber);

  std::vector<std::string> argv_store{"spirit"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*paint_cmd) return cmd_paint(pa, out, err);
    if (*survey_cmd) return cmd_survey(sa, out, err);
    if (*weigh_cmd) return cmd_weigh(wa, out, err);
    if (*agg_cmd) return cmd_aggregate(aa, out, err);
    if (*diag_cmd) return cmd_diagnose(da, out, err);
    if (*synth_cmd) return cmd_synth(ya, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}

}  // namespace spirit::cli
