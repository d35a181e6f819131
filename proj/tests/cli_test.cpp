#include "indukt/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "indukt/harness.hpp"
#include "support.hpp"

namespace indukt::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "indukt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string corpus_arg() { return "--corpus=" + test::mini_corpus_path().string(); }

TEST(Cli, HelpAndUsage) {
  EXPECT_EQ(invoke({"--help"}).code, kExitOk);
  EXPECT_EQ(invoke({}).code, kExitConfig);
  EXPECT_EQ(invoke({"frobnicate"}).code, kExitConfig);
  EXPECT_EQ(invoke({"run", "--no-such-flag"}).code, kExitConfig);
}

TEST(Cli, ConfigErrorsExitTwo) {
  test::TempDir dir;
  const auto out = "--out=" + (dir / "o").string();
  EXPECT_EQ(invoke({"run", out}).code, kExitConfig);  // no corpus
  EXPECT_EQ(invoke({"run", corpus_arg(), out, "--mode=magic"}).code, kExitConfig);
  EXPECT_EQ(invoke({"run", corpus_arg(), out, "--p-gen=1.5"}).code, kExitConfig);
  EXPECT_EQ(invoke({"run", corpus_arg(), out, "--runs=0"}).code, kExitConfig);
  EXPECT_EQ(invoke({"run", corpus_arg(), out, "--executor=external_sandbox"}).code, kExitConfig);
  EXPECT_EQ(invoke({"run", "--corpus=/nonexistent.json", out}).code, kExitConfig);
  EXPECT_EQ(invoke({"run", corpus_arg(), out, "--config=/nonexistent.conf"}).code, kExitConfig);
}

TEST(Cli, MissingCredentialNamesTheVariable) {
  unsetenv("INDUKT_CLI_TEST_KEY");
  test::TempDir dir;
  const auto r = invoke({"run", corpus_arg(), "--out=" + (dir / "o").string(), "--provider=live",
                         "--endpoint=http://127.0.0.1:1/v1", "--api-key-env=INDUKT_CLI_TEST_KEY"});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("INDUKT_CLI_TEST_KEY"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "o" / "run_1.ndjson"));
}

TEST(Cli, SandboxAbsentIsInfrastructure) {
  test::TempDir dir;
  const auto r = invoke({"run", corpus_arg(), "--out=" + (dir / "o").string(), "--runs=1",
                         "--executor=external_sandbox", "--sandbox-command=/nonexistent/worker --flag"});
  EXPECT_EQ(r.code, kExitInfrastructure);
  EXPECT_NE(r.err.find("sandbox"), std::string::npos);
}

TEST(Cli, RecordReplayAndMetrics) {
  test::TempDir dir;
  const auto rec = dir / "rec";
  auto r = invoke({"run", corpus_arg(), "--out=" + rec.string(), "--runs=2", "--seed=5", "--p-gen=0.5",
                   "--p-impl=0.7", "--p-rescue=0.2", "--record", "--workers=2"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  ASSERT_TRUE(fs::exists(rec / "transcript.ndjson"));
  const auto original1 = harness::read_text(rec / "run_1.ndjson");
  const auto original2 = harness::read_text(rec / "run_2.ndjson");

  // Same flags, different worker count.
  const auto rep = dir / "rep";
  r = invoke({"replay", corpus_arg(), "--out=" + rep.string(), "--runs=2", "--seed=5", "--p-gen=0.5",
              "--p-impl=0.7", "--p-rescue=0.2", "--transcript=" + (rec / "transcript.ndjson").string(),
              "--workers=1"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(harness::read_text(rep / "run_1.ndjson"), original1);
  EXPECT_EQ(harness::read_text(rep / "run_2.ndjson"), original2);

  // Configuration restored from the log header.
  const auto rep2 = dir / "rep2";
  r = invoke({"replay", "--from-log=" + (rec / "run_1.ndjson").string(), "--out=" + rep2.string(),
              "--transcript=" + (rec / "transcript.ndjson").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(harness::read_text(rep2 / "run_2.ndjson"), original2);

  const auto m = dir / "metrics";
  r = invoke({"metrics", (rec / "run_1.ndjson").string(), (rec / "run_2.ndjson").string(),
              "--out=" + m.string(), "--overlay=" + (test::data_dir() / "literature.json").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* f : {"acquisition.csv", "per_task.csv", "metrics.json", "summary.csv"}) {
    EXPECT_TRUE(fs::exists(m / f)) << f;
  }
  const auto summary = harness::read_text(m / "summary.csv");
  EXPECT_NE(summary.find("literature,human,0.521,0.202"), std::string::npos);

  r = invoke({"metrics", (rec / "run_1.ndjson").string(), "--definition=sideways", "--out=" + m.string()});
  EXPECT_EQ(r.code, kExitConfig);

  // A changed prompt set changes every request: the transcript no longer covers it.
  const auto prompts = dir / "prompts";
  fs::create_directories(prompts);
  harness::write_text(prompts / "generator.txt", "### user\nGuess the rule:\n{{examples}}\n");
  r = invoke({"replay", corpus_arg(), "--out=" + (dir / "miss").string(), "--runs=2", "--seed=5",
              "--prompts=" + prompts.string(), "--transcript=" + (rec / "transcript.ndjson").string()});
  EXPECT_EQ(r.code, kExitReplayMiss) << r.err;
}

TEST(Cli, MetricsRejectsBadLogs) {
  test::TempDir dir;
  harness::write_text(dir / "bad.ndjson", "not a log\n");
  EXPECT_EQ(invoke({"metrics", (dir / "bad.ndjson").string(), "--out=" + (dir / "m").string()}).code,
            kExitConfig);
  EXPECT_EQ(invoke({"metrics", "--out=" + (dir / "m").string()}).code, kExitConfig);

  ASSERT_EQ(invoke({"run", corpus_arg(), "--out=" + (dir / "hs").string(), "--runs=1"}).code, kExitOk);
  ASSERT_EQ(invoke({"run", corpus_arg(), "--out=" + (dir / "d").string(), "--runs=1", "--mode=direct"}).code,
            kExitOk);
  const auto r = invoke({"metrics", (dir / "hs" / "run_1.ndjson").string(), (dir / "d" / "run_1.ndjson").string(),
                         "--out=" + (dir / "m").string()});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("mix"), std::string::npos);
}

TEST(Cli, ConfigFileWithFlagOverride) {
  test::TempDir dir;
  harness::write_text(dir / "exp.conf",
                      "# experiment\ncorpus = " + test::mini_corpus_path().string() +
                          "\nruns = 1\nmode = direct\np_direct = 0.0\nbudget_accounting = \"strict\"\n");
  const auto r = invoke({"run", "--config", (dir / "exp.conf").string(), "--p-direct=1",
                         "--out=" + (dir / "o").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto log = harness::read_run_log(dir / "o" / "run_1.ndjson");
  EXPECT_EQ(log.header.mode, pipeline::Mode::Direct);
  EXPECT_EQ(log.header.config.at("p_direct"), 1.0);
  EXPECT_EQ(log.header.config.at("budget_accounting"), "strict");
  EXPECT_EQ(log.header.config.at("runs"), 1);
  EXPECT_EQ(log.outcomes.size(), 110u);

  harness::write_text(dir / "broken.conf", "runs 3\n");
  EXPECT_EQ(invoke({"run", "--config", (dir / "broken.conf").string()}).code, kExitConfig);
}

TEST(Cli, SnapshotRoundTrip) {
  RunConfig c;
  c.corpus = "x.json";
  c.p_gen = 0.25;
  c.sandbox_command = {"python3", "worker.py"};
  c.seed = 99;
  const auto back = from_snapshot(snapshot(c));
  EXPECT_EQ(snapshot(back), snapshot(c));
  EXPECT_EQ(back.sandbox_command, c.sandbox_command);
}

TEST(Cli, AnalyzeFixture) {
  test::TempDir dir;
  const auto r = invoke({"analyze", "--fixture=table2", "--out=" + dir.path().string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("structural zero holds"), std::string::npos);
  EXPECT_NE(r.out.find("rescued 1092"), std::string::npos);
  EXPECT_EQ(harness::read_text(dir / "table2.csv").substr(0, 5), "index");
  const auto j = nlohmann::json::parse(harness::read_text(dir / "analysis.json"));
  EXPECT_EQ(j.at("source"), "fixture:table2");
  EXPECT_TRUE(fs::exists(dir / "table3.csv"));
  EXPECT_EQ(invoke({"analyze", "--fixture=table9", "--out=" + dir.path().string()}).code, kExitConfig);
}

TEST(Cli, AnalyzeLogs) {
  test::TempDir dir;
  ASSERT_EQ(invoke({"run", corpus_arg(), "--out=" + (dir / "hs").string(), "--runs=1", "--p-gen=0.3",
                    "--p-impl=0.8", "--p-rescue=0.1"})
                .code,
            kExitOk);
  const auto log = (dir / "hs" / "run_1.ndjson").string();
  auto r = invoke({"analyze", log, corpus_arg(), "--judge=synthetic", "--out=" + (dir / "a").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("total 110"), std::string::npos) << r.out;
  EXPECT_EQ(invoke({"analyze", log, "--judge=synthetic", "--out=" + (dir / "a").string()}).code, kExitConfig);
  EXPECT_EQ(invoke({"analyze", log, corpus_arg(), "--judge=oracle", "--out=" + (dir / "a").string()}).code,
            kExitConfig);
}

}  // namespace
}  // namespace indukt::cli
