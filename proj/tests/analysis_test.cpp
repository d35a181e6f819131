#include "indukt/analysis.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

namespace indukt::analysis {
namespace {

using providers::Stage;

// Published Table 2 figures (counts, rates, odds ratios) with the tolerances
// of the acceptance criteria.
TEST(Fixture, Table2Rates) {
  const auto t = table2_fixture();
  EXPECT_EQ(t.cell_sum(), 5509);
  EXPECT_EQ(t.total(), 5500);
  EXPECT_EQ(t.cell(false, false, false, false), 1116);
  EXPECT_EQ(t.cell(true, true, true, true), 1804);

  const auto r = derived_rates(t);
  EXPECT_NEAR(r.overall_test_rate, 0.6202, 0.0005);
  EXPECT_EQ(r.rescued, 1092);
  EXPECT_EQ(r.double_failures, 2948);
  EXPECT_NEAR(r.rescue_rate_total, 0.1985, 0.0005);
  EXPECT_NEAR(r.rescue_rate_double_failures, 0.3704, 0.0005);
  EXPECT_NEAR(r.p_test_given_g_ok_s_fail, 0.7534, 0.001);
  EXPECT_NEAR(r.p_test_given_both_ok, 0.9589, 0.001);
  EXPECT_NEAR(r.marginals.generator, 0.464, 0.01);
  EXPECT_NEAR(r.marginals.summarizer, 0.345, 0.01);
  EXPECT_NEAR(r.marginals.implementor_train, 0.612, 0.01);
  EXPECT_NEAR(r.retention, 0.74, 0.005);

  EXPECT_NEAR(odds_ratio(t, Outcome::ImplementorTrain).value, 19.3, 0.2);
  EXPECT_NEAR(odds_ratio(t, Outcome::ImplementorTest).value, 16.3, 0.2);
}

TEST(Fixture, RatesMatchHandCounts) {
  const auto t = table2_fixture();
  const auto r = derived_rates(t);
  // Test successes are the odd indices.
  std::int64_t test_ok = 0;
  for (std::size_t i = 1; i < 16; i += 2) test_ok += t.cells[i];
  EXPECT_EQ(r.test_successes, test_ok);
  EXPECT_EQ(r.overall_test_rate, static_cast<double>(test_ok) / 5500.0);
  EXPECT_EQ(r.g_ok_s_fail, 115 + 52 + 49 + 449);
  EXPECT_EQ(r.g_ok_s_fail_test_ok, 52 + 449);
  EXPECT_EQ(r.both_ok, 42 + 14 + 36 + 1804);
  EXPECT_EQ(r.both_ok_test_ok, 14 + 1804);
  EXPECT_EQ(r.marginals_cell_sum.generator, static_cast<double>(2561) / 5509.0);
}

TEST(Fixture, StructuralZeroAndNotes) {
  auto t = table2_fixture();
  EXPECT_TRUE(structural_zero_holds(t));
  const auto report = analyze_table(t, "fixture:table2");
  ASSERT_EQ(report.notes.size(), 2u);
  EXPECT_NE(report.notes[0].find("structural zero"), std::string::npos);
  EXPECT_NE(report.notes[1].find("5509"), std::string::npos);

  t.cells[ContingencyTable::index(false, true, true, false)] = 1;
  EXPECT_FALSE(structural_zero_holds(t));
}

TEST(Fixture, Table2Csv) {
  const auto csv = table2_csv(table2_fixture());
  EXPECT_EQ(csv.rfind("index,generator,summarizer,implementor_train,implementor_test,count,proportion_pct\n"
                      "1,failure,failure,failure,failure,1116,20.3\n"
                      "2,failure,failure,failure,success,793,14.4\n",
                      0),
            0u);
  EXPECT_NE(csv.find("16,success,success,success,success,1804,32.8\n"), std::string::npos);
  EXPECT_NE(csv.find("total,,,,,5500,100.0\n"), std::string::npos);
}

TEST(Rates, ZeroTotalRejected) {
  EXPECT_THROW(derived_rates(ContingencyTable{}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Statistics oracles.

TEST(OddsRatioOracle, ClosedFormAndLogisticFit) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> cell(1, 60);
  for (int i = 0; i < 1000; ++i) {
    const int a = cell(rng), b = cell(rng), c = cell(rng), d = cell(rng);
    const auto o = odds_ratio(a, b, c, d);
    const double closed = (static_cast<double>(a) / b) / (static_cast<double>(c) / d);
    ASSERT_NEAR(o.value, closed, 1e-6 * closed);
    EXPECT_FALSE(o.degenerate);
    const auto fit = fit_logistic(o);
    ASSERT_TRUE(fit.converged);
    ASSERT_NEAR(std::exp(fit.slope), o.value, 1e-6 * o.value) << a << " " << b << " " << c << " " << d;
    // Intercept is the log-odds of the x=0 group.
    ASSERT_NEAR(fit.intercept, std::log(static_cast<double>(c) / d), 1e-6);
  }
}

TEST(OddsRatioOracle, DegenerateTables) {
  EXPECT_TRUE(std::isinf(odds_ratio(3, 0, 2, 5).value));
  EXPECT_TRUE(odds_ratio(3, 0, 2, 5).degenerate);
  EXPECT_EQ(odds_ratio(0, 4, 2, 5).value, 0.0);
  EXPECT_TRUE(std::isnan(odds_ratio(0, 0, 2, 5).value));
}

TEST(LogisticOracle, ScoreEquationsVanishAtTheFit) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> groups(3, 6), trials(5, 40);
  std::uniform_real_distribution<double> xs(-2.0, 2.0);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<BinomialGroup> g;
    const int k = groups(rng);
    for (int i = 0; i < k; ++i) {
      const int n = trials(rng);
      std::uniform_int_distribution<int> s(1, n - 1);
      g.push_back({xs(rng), static_cast<double>(s(rng)), static_cast<double>(n)});
    }
    const auto fit = fit_logistic(g);
    ASSERT_TRUE(fit.converged);
    double d0 = 0, d1 = 0;
    for (const auto& grp : g) {
      const double p = 1.0 / (1.0 + std::exp(-(fit.intercept + fit.slope * grp.x)));
      d0 += grp.successes - grp.trials * p;
      d1 += grp.x * (grp.successes - grp.trials * p);
    }
    EXPECT_NEAR(d0, 0.0, 1e-6);
    EXPECT_NEAR(d1, 0.0, 1e-6);
  }
}

// Integer data lets the oracle compute the covariance terms exactly.
TEST(PearsonOracle, MatchesIntegerFormula) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> len(2, 12), val(0, 9);
  int defined = 0;
  for (int i = 0; i < 1000; ++i) {
    const int n = len(rng);
    std::vector<double> x, y;
    long long sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int k = 0; k < n; ++k) {
      const int a = val(rng), b = i % 3 == 0 ? a * 2 - val(rng) % 3 : val(rng);
      x.push_back(a);
      y.push_back(b);
      sx += a;
      sy += b;
      sxx += static_cast<long long>(a) * a;
      syy += static_cast<long long>(b) * b;
      sxy += static_cast<long long>(a) * b;
    }
    const long long cov = n * sxy - sx * sy;
    const long long vx = n * sxx - sx * sx;
    const long long vy = n * syy - sy * sy;
    const auto r = pearson(x, y);
    if (vx == 0 || vy == 0) {
      EXPECT_FALSE(r);
      continue;
    }
    ASSERT_TRUE(r);
    ++defined;
    const double expected = static_cast<double>(cov) / std::sqrt(static_cast<double>(vx) * static_cast<double>(vy));
    ASSERT_NEAR(*r, expected, 1e-6);
  }
  EXPECT_GT(defined, 900);
  EXPECT_FALSE(pearson(std::vector<double>{1.0}, std::vector<double>{2.0}));
}

// ---------------------------------------------------------------------------
// Judge

TEST(Verdicts, Parsing) {
  EXPECT_EQ(parse_verdict("CORRECT"), true);
  EXPECT_EQ(parse_verdict("  correct."), true);
  EXPECT_EQ(parse_verdict("INCORRECT"), false);
  EXPECT_EQ(parse_verdict("This is incorrect, not correct"), false);
  EXPECT_EQ(parse_verdict("maybe"), std::nullopt);
}

TEST(JudgeModes, ExactAndNormalized) {
  Judge exact(JudgeConfig{JudgeMode::Exact});
  EXPECT_EQ(exact.judge("Reverse the list.", "Reverse the list.").verdict, true);
  EXPECT_EQ(exact.judge("reverse the list", "Reverse the list.").verdict, false);
  Judge norm(JudgeConfig{JudgeMode::Normalized});
  EXPECT_EQ(norm.judge("  reverse   THE list.", "Reverse the list.").verdict, true);
  EXPECT_EQ(norm.judge("", "Reverse the list.").verdict, false);
  EXPECT_THROW(norm.judge("x", "  "), std::invalid_argument);
  EXPECT_EQ(norm.calls(), 0u);
}

TEST(JudgeModes, ProviderIsMemoizedAndShortCircuited) {
  auto p = std::make_shared<providers::ScriptedProvider>();
  p->sequence(Stage::Evaluator, {"CORRECT", "Sure, that is INCORRECT", "no idea"});
  JudgeConfig c;
  c.mode = JudgeMode::Provider;
  c.provider = p;
  Judge j(c);
  EXPECT_EQ(j.judge("Flip the list", "Reverse the list.").verdict, true);
  EXPECT_EQ(j.judge("Flip the list", "Reverse the list.").verdict, true);  // memo
  EXPECT_EQ(j.calls(), 1u);
  EXPECT_EQ(j.judge("Reverse the list.", "Reverse the list.").verdict, true);  // shortcut
  EXPECT_EQ(j.judge(std::string(pipeline::kNoHypothesis), "Reverse the list.").verdict, false);
  EXPECT_EQ(j.calls(), 1u);
  EXPECT_EQ(j.judge("Sort it", "Reverse the list.").verdict, false);
  const auto unparseable = j.judge("Drop it", "Reverse the list.");
  EXPECT_EQ(unparseable.verdict, false);
  EXPECT_EQ(unparseable.degradation, "unparseable evaluator reply");
  EXPECT_EQ(j.calls(), 3u);
  EXPECT_EQ(p->requests().at(0).temperature, 0.0);
}

TEST(JudgeModes, ProviderFailureIsMissingAndRetried) {
  auto p = std::make_shared<providers::ScriptedProvider>();
  p->fail(Stage::Evaluator, "down");
  JudgeConfig c;
  c.mode = JudgeMode::Provider;
  c.provider = p;
  Judge j(c);
  const auto first = j.judge("Flip", "Reverse.");
  EXPECT_FALSE(first.verdict);
  EXPECT_NE(first.degradation.find("down"), std::string::npos);
  p->always(Stage::Evaluator, "CORRECT");
  EXPECT_EQ(j.judge("Flip", "Reverse.").verdict, true);
  EXPECT_EQ(p->calls(Stage::Evaluator), 2u);
}

// ---------------------------------------------------------------------------
// Logs → verdicts → table

pipeline::TrialOutcome outcome(std::string task, int trial, bool g, bool s, bool it, bool ie, int versions) {
  pipeline::TrialOutcome o;
  o.task_id = std::move(task);
  o.run_id = 1;
  o.trial_index = trial;
  const auto& desc = test::mini_corpus().at(o.task_id).description;
  for (int k = 1; k <= 64; ++k) {
    o.generated.push_back({g && k == 17 ? desc : "wrong " + std::to_string(k % 5),
                           pipeline::Hypothesis::Source::Generator, k, {}});
  }
  for (int k = 1; k <= 8; ++k) {
    o.summaries.push_back({s && k == 2 ? desc : "nope", pipeline::Hypothesis::Source::Summarizer, k, {}});
  }
  o.train_solved = it;
  o.test_solved_any = ie;
  o.ledger.program_versions = versions;
  return o;
}

RunLog constructed_log() {
  RunLog log;
  log.header.corpus_fingerprint = test::mini_corpus().fingerprint();
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.5);
  int trial = 0;
  for (const auto& task : test::mini_corpus().tasks()) {
    for (int t = 1; t <= 11; ++t) {
      const bool g = coin(rng);
      const bool s = g && coin(rng);
      const bool it = coin(rng), ie = coin(rng);
      log.outcomes.push_back(outcome(task.id, t, g, s, it, ie, it ? 1 + trial % 7 : 256));
      ++trial;
    }
  }
  log.outcomes[4].infrastructure_failure = "down";
  return log;
}

TEST(Contingency, CountsMatchBruteForce) {
  const std::vector<RunLog> logs{constructed_log()};
  Judge judge(JudgeConfig{JudgeMode::Exact});
  const auto verdicts = judge_logs(logs, test::mini_corpus(), judge);
  ASSERT_EQ(verdicts.size(), 110u);
  EXPECT_TRUE(verdicts[4].missing);
  check_coverage(logs, verdicts);

  const auto table = build_contingency(verdicts);
  std::array<std::int64_t, 16> expected{};
  for (const auto& o : logs[0].outcomes) {
    if (o.infrastructure_failure) continue;
    const auto& desc = test::mini_corpus().at(o.task_id).description;
    const bool g = o.generated[16].text == desc;
    const bool s = o.summaries[1].text == desc;
    ++expected[ContingencyTable::index(g, s, o.train_solved, o.test_solved_any)];
  }
  EXPECT_EQ(table.cells, expected);
  EXPECT_EQ(table.cell_sum(), 109);
  EXPECT_FALSE(table.declared_total);
  EXPECT_TRUE(structural_zero_holds(table));

  for (const auto& v : verdicts) {
    if (v.missing) continue;
    EXPECT_EQ(v.generator_correct_count, v.generator_ok ? 1 : 0);
    EXPECT_EQ(v.retained_correct, v.generator_ok && v.summarizer_ok);
  }
}

TEST(Contingency, CoverageGapsDetected) {
  const std::vector<RunLog> logs{constructed_log()};
  Judge judge(JudgeConfig{JudgeMode::Exact});
  auto verdicts = judge_logs(logs, test::mini_corpus(), judge);
  verdicts.erase(verdicts.begin() + 7);
  EXPECT_THROW(check_coverage(logs, verdicts), std::invalid_argument);
}

TEST(Contingency, DirectLogsRejected) {
  RunLog log = constructed_log();
  log.header.mode = pipeline::Mode::Direct;
  Judge judge(JudgeConfig{JudgeMode::Exact});
  EXPECT_THROW(judge_logs(std::vector<RunLog>{log}, test::mini_corpus(), judge), std::invalid_argument);
}

TEST(Costs, SplitByOutcome) {
  const std::vector<RunLog> logs{constructed_log()};
  const auto c = refinement_costs(logs, Split::TrainOutcome);
  double ok = 0, fail = 0;
  std::size_t nok = 0, nfail = 0;
  for (const auto& o : logs[0].outcomes) {
    if (o.infrastructure_failure) continue;
    (o.train_solved ? ok : fail) += o.ledger.program_versions;
    ++(o.train_solved ? nok : nfail);
  }
  EXPECT_EQ(c.success_n, nok);
  EXPECT_EQ(c.failure_n, nfail);
  EXPECT_DOUBLE_EQ(c.success_mean, ok / static_cast<double>(nok));
  EXPECT_EQ(c.failure_mean, 256.0);
  EXPECT_DOUBLE_EQ(c.failure_fraction(), 1.0);
}

TEST(Retention, AmongGeneratorSuccesses) {
  std::vector<ModuleVerdicts> v(5);
  v[0].generator_ok = true;
  v[0].retained_correct = true;
  v[1].generator_ok = true;
  v[2].generator_ok = true;
  v[2].retained_correct = true;
  v[3].generator_ok = true;
  v[3].missing = true;
  EXPECT_DOUBLE_EQ(*retention_rate(v), 2.0 / 3.0);
  EXPECT_FALSE(retention_rate(std::vector<ModuleVerdicts>{}));
}

TEST(Modules, PooledAndPerTask) {
  std::vector<ModuleVerdicts> v(4);
  v[0].task_id = v[1].task_id = "a";
  v[2].task_id = v[3].task_id = "b";
  v[0].generator_ok = v[1].generator_ok = v[2].generator_ok = true;
  const auto m = module_accuracy(v);
  ASSERT_EQ(m.size(), 4u);
  EXPECT_EQ(m[0].module, "generator");
  EXPECT_EQ(m[0].pooled, 0.75);
  EXPECT_EQ(m[0].task_mean, 0.75);
  EXPECT_EQ(m[0].task_std, 0.25);
}

TEST(Report, FromSyntheticLogs) {
  providers::SyntheticConfig sc;
  sc.p_gen = 0.05;
  sc.p_impl = 0.9;
  sc.p_rescue = 0.2;
  sc.p_retain = 0.7;
  harness::ExperimentConfig config;
  config.n_runs = 1;
  exec::Executor ex;
  const auto logs = harness::run_experiment(test::mini_corpus(), config, harness::synthetic_factory(sc), ex);

  auto p = std::make_shared<providers::SyntheticProvider>(providers::SyntheticConfig{});
  JudgeConfig jc;
  jc.mode = JudgeMode::Provider;
  jc.provider = p;
  Judge judge(jc);
  const auto report = analyze_logs(logs, test::mini_corpus(), judge);
  EXPECT_EQ(report.table.cell_sum(), 110);
  EXPECT_TRUE(report.structural_zero);
  EXPECT_EQ(report.modules.size(), 4u);
  ASSERT_TRUE(report.correlation);
  EXPECT_EQ(report.correlation->trials, 110u);
  EXPECT_EQ(report.missing, 0u);
  const auto j = to_json(report);
  EXPECT_EQ(j.at("source"), "logs");
  EXPECT_FALSE(table3_csv(report).empty());

  corpus::Corpus other({test::mini_corpus().tasks()[0]});
  EXPECT_THROW(analyze_logs(logs, other, judge), std::invalid_argument);
}

}  // namespace
}  // namespace indukt::analysis
