#include <gtest/gtest.h>

#include "spirit/cli.hpp"
#include "spirit/synth_fixtures.hpp"
#include "test_support.hpp"

using namespace spirit;
using spirit::testkit::run_cli;

namespace {

struct Fixture {
  testkit::TempDir dir{"spirit-cli"};
  synth::FixtureFiles files;
  std::string bank = (dir / "bank").string();
  testkit::ScopedEnv epoch{"SOURCE_DATE_EPOCH", "1700000000"};

  Fixture() { files = synth::write_population(synth::gen_population(11, 8, 4), dir / "fx"); }

  testkit::CliResult paint(std::vector<std::string> extra = {}) {
    std::vector<std::string> args = {"paint", "--posts", files.posts_reddit.string(), files.posts_twitter.string(),
                                     "--bank", bank, "--backend", files.backend.string(), "--demographics",
                                     files.panel.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return run_cli(args);
  }

  testkit::CliResult survey(std::vector<std::string> extra = {}) {
    std::vector<std::string> args = {"survey", "--bank", bank, "--survey", files.survey.string(), "--backend",
                                     files.backend.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return run_cli(args);
  }
};

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
  EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"paint"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kExitUsage);
}

TEST(Cli, MissingInputIsDataError) {
  testkit::TempDir dir;
  auto r = run_cli({"paint", "--posts", (dir / "none.jsonl").string(), "--bank", (dir / "b").string(), "--backend",
                    (dir / "none.json").string()});
  EXPECT_EQ(r.code, cli::kExitData) << r.err;
}

TEST(Cli, PaintThenCache) {
  Fixture f;
  auto first = f.paint();
  ASSERT_EQ(first.code, 0) << first.err;
  EXPECT_NE(first.out.find("painted 8"), std::string::npos) << first.out;
  auto again = f.paint();
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_NE(again.out.find("cached 8"), std::string::npos) << again.out;
  auto re = f.paint({"--repaint"});
  ASSERT_EQ(re.code, 0) << re.err;
  BankStore bank(f.bank, BankStore::Mode::read);
  EXPECT_EQ(bank.user_ids().size(), 8u);
}

TEST(Cli, PaintFailureIsBackendError) {
  Fixture f;
  auto cfg = synth::scripted_mock(Json::array({Json{{"match", ""}, {"responses", {"garbage"}}}}));
  write_text_file(f.dir / "bad.json", to_json(cfg).dump());
  auto r = run_cli({"paint", "--posts", f.files.posts_reddit.string(), "--bank", f.bank, "--backend",
                    (f.dir / "bad.json").string()});
  EXPECT_EQ(r.code, cli::kExitBackend) << r.out << r.err;
}

TEST(Cli, SurveyProtocols) {
  Fixture f;
  ASSERT_EQ(f.paint().code, 0);
  auto direct = f.survey();
  ASSERT_EQ(direct.code, 0) << direct.err;
  EXPECT_EQ(first_line(direct.out), "r0001-synth-direct");

  EXPECT_EQ(f.survey({"--protocol", "timely"}).code, cli::kExitUsage);
  auto timely = f.survey({"--protocol", "timely", "--search", f.files.search.string()});
  ASSERT_EQ(timely.code, 0) << timely.err;
  auto base = f.survey({"--protocol", "demographic"});
  ASSERT_EQ(base.code, 0) << base.err;
  EXPECT_EQ(first_line(base.out), "r0003-synth-demographic_baseline");

  BankStore bank(f.bank, BankStore::Mode::read);
  auto run = bank.load_run("r0002-synth-timely");
  EXPECT_EQ(run.responses.size(), 32u);
  EXPECT_GT(run.manifest.extra["search_calls"].get<int>(), 0);
  for (const auto& r : run.responses) EXPECT_TRUE(r.influenced_by_search.has_value());
}

TEST(Cli, EvaluationModeHidesDemographics) {
  Fixture f;
  ASSERT_EQ(f.paint().code, 0);
  ASSERT_EQ(f.survey({"--mode", "evaluation"}).code, 0);
  ASSERT_EQ(f.survey().code, 0);
  BankStore bank(f.bank, BankStore::Mode::read);
  EXPECT_EQ(bank.load_run("r0001-synth-direct").manifest.extra["demographics_included"], false);
  EXPECT_EQ(bank.load_run("r0002-synth-direct").manifest.extra["demographics_included"], true);
  EXPECT_EQ(f.survey({"--with-demographics", "--no-demographics"}).code, cli::kExitUsage);
}

TEST(Cli, WeighAggregateDiagnose) {
  Fixture f;
  ASSERT_EQ(f.paint().code, 0);
  ASSERT_EQ(f.survey().code, 0);
  auto csv = (f.dir / "w.csv").string();
  auto weigh = run_cli({"weigh", "--bank", f.bank, "--targets", f.files.targets.string(), "--out", csv});
  ASSERT_EQ(weigh.code, 0) << weigh.err;
  auto report = Json::parse(weigh.out);
  EXPECT_TRUE(report["converged"].get<bool>());

  EXPECT_EQ(run_cli({"aggregate", "--bank", f.bank, "--run", "r0001-synth-direct"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"aggregate", "--bank", f.bank, "--run", "r0001-synth-direct", "--weights", csv, "--unweighted"})
                .code,
            cli::kExitUsage);
  auto agg = run_cli({"aggregate", "--bank", f.bank, "--run", "r0001-synth-direct", "--weights", csv});
  ASSERT_EQ(agg.code, 0) << agg.err;
  EXPECT_EQ(run_cli({"aggregate", "--bank", f.bank, "--run", "r0099-x-direct", "--unweighted"}).code, cli::kExitData);

  auto out = (f.dir / "diag.json").string();
  auto diag = run_cli({"diagnose", "--bank", f.bank, "--run", "r0001-synth-direct", "--truth",
                       f.files.truth.string(), "--out", out, "--csv", (f.dir / "diag.csv").string()});
  ASSERT_EQ(diag.code, 0) << diag.err;
  auto j = Json::parse(read_text_file(out));
  EXPECT_EQ(j["accuracy"]["macro_accuracy"], 1.0);
  EXPECT_TRUE(std::filesystem::exists(f.dir / "diag.csv"));
}

TEST(Cli, SynthWritesFixtures) {
  testkit::TempDir dir;
  auto r = run_cli({"synth", "--out", (dir / "fx").string(), "--seed", "5", "--users", "3", "--questions", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_survey(dir / "fx" / "survey.json").questions.size(), 2u);
}
