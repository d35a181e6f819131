// Acceptance suite: one PASS/FAIL line per primary criterion. Every
// tolerance is pinned below. Exit status is non-zero when any line fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "dsl_oracle.hpp"
#include "indukt/analysis.hpp"
#include "indukt/cli.hpp"
#include "indukt/dsl.hpp"
#include "indukt/harness.hpp"
#include "indukt/pipeline.hpp"
#include "support.hpp"

namespace {

using namespace indukt;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

// Pinned tolerances.
constexpr double kRateTol = 0.0005;       // overall test rate, rescue shares
constexpr double kConditionalTol = 0.001;  // P(test | ...)
constexpr double kMarginalTol = 0.01;
constexpr double kOddsTol = 0.2;
constexpr double kOracleTol = 1e-6;
constexpr double kFixtureSeconds = 1.0;
constexpr double kBudgetSeconds = 60.0;
constexpr double kInterpreterSeconds = 30.0;

struct Check {
  bool ok = true;
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (failures.size() < 5) failures.push_back(what);
    }
  }
  void near(double got, double want, double tol, const std::string& what) {
    std::ostringstream s;
    s.precision(8);
    s << what << " = " << got << " (want " << want << " ± " << tol << ")";
    expect(std::fabs(got - want) <= tol, s.str());
  }
};

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

int invoke_cli(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "indukt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (err_text) *err_text = err.str();
  return code;
}

// 1 ---------------------------------------------------------------------------
Check table2_fixture() {
  Check c;
  test::TempDir dir;
  const auto start = Clock::now();
  const int code = invoke_cli({"analyze", "--fixture=table2", "--out=" + dir.path().string()});
  const double took = seconds_since(start);
  c.expect(code == 0, "analyze --fixture table2 exit code " + std::to_string(code));
  if (code != 0) return c;
  const auto j = nlohmann::json::parse(harness::read_text(dir / "analysis.json"));
  const auto& r = j.at("rates");
  c.near(r.at("overall_test_rate").get<double>(), 0.6202, kRateTol, "overall test rate");
  c.expect(r.at("rescued").get<int>() == 1092, "rescued trials");
  c.expect(r.at("double_failures").get<int>() == 2948, "double failures");
  c.near(r.at("rescue_rate_total").get<double>(), 0.1985, kRateTol, "rescue share of total");
  c.near(r.at("rescue_rate_double_failures").get<double>(), 0.3704, kRateTol, "rescue share of double failures");
  c.near(r.at("p_test_given_g_ok_s_fail").get<double>(), 0.7534, kConditionalTol, "P(test|G ok,S fail)");
  c.near(r.at("p_test_given_both_ok").get<double>(), 0.9589, kConditionalTol, "P(test|both ok)");
  const auto& m = r.at("marginals");
  c.near(m.at("generator").get<double>(), 0.464, kMarginalTol, "generator marginal");
  c.near(m.at("summarizer").get<double>(), 0.345, kMarginalTol, "summarizer marginal");
  c.near(m.at("implementor_train").get<double>(), 0.612, kMarginalTol, "implementor train marginal");
  const double or_train = j.at("odds_ratio").at("implementor_train").at("odds_ratio").get<double>();
  const double or_test = j.at("odds_ratio").at("implementor_test").at("odds_ratio").get<double>();
  c.near(or_train, 19.3, kOddsTol, "odds ratio (train)");
  c.near(or_test, 16.3, kOddsTol, "odds ratio (test)");
  c.expect(took < kFixtureSeconds, "runtime " + std::to_string(took) + " s");
  std::ostringstream note;
  note.precision(4);
  note << "test odds ratio " << or_test << " vs published \"about 17\"; cells sum to "
       << j.at("contingency").at("cell_sum").get<int>() << ", declared total "
       << j.at("contingency").at("total").get<int>();
  c.notes.push_back(note.str());
  return c;
}

// 2 ---------------------------------------------------------------------------
Check structural_zero() {
  Check c;
  auto t = analysis::table2_fixture();
  for (bool it : {false, true})
    for (bool ie : {false, true}) c.expect(t.cell(false, true, it, ie) == 0, "G fail / S ok cell is non-zero");
  const auto report = analysis::analyze_table(t, "fixture:table2");
  c.expect(report.structural_zero, "analyzer does not assert the structural zero");
  bool noted = false;
  for (const auto& n : report.notes) noted = noted || n.find("structural zero") != std::string::npos;
  c.expect(noted, "finding missing from report notes");
  // Negative control: the finding is not asserted when it does not hold.
  t.cells[analysis::ContingencyTable::index(false, true, false, true)] = 3;
  c.expect(!analysis::analyze_table(t, "perturbed").structural_zero, "asserted on a perturbed table");
  return c;
}

// 3 ---------------------------------------------------------------------------
Check budget_invariants() {
  Check c;
  using providers::Stage;
  const auto start = Clock::now();
  exec::Executor ex;
  const pipeline::PipelineConfig config;
  int trials = 0;
  for (const auto& task : test::mini_corpus().tasks()) {
    for (int n = 1; n <= corpus::kTrialsPerTask; ++n) {
      providers::ScriptedProvider failing;
      failing.always(Stage::Generator, "a rule")
          .always(Stage::Summarizer, "1. r1\n2. r2\n3. r3\n4. r4\n5. r5\n6. r6\n7. r7\n8. r8")
          .always(Stage::Implementor, "```\nconcat_self\n```")
          .always(Stage::Refinement, "```\nrepeat 3\n```");
      const auto o = pipeline::run_trial_hypothesis_search(corpus::trial(task, n), failing, ex, config);
      const auto& l = o.ledger;
      const std::string where = task.id + " t" + std::to_string(n);
      c.expect(l.generator_calls == 64, where + ": generator calls " + std::to_string(l.generator_calls));
      c.expect(l.summarizer_calls == 1, where + ": summarizer calls " + std::to_string(l.summarizer_calls));
      c.expect(l.implementor_calls <= 192, where + ": implementor calls " + std::to_string(l.implementor_calls));
      c.expect(l.total_calls() <= 257, where + ": total calls " + std::to_string(l.total_calls()));
      c.expect(l.program_versions == 256, where + ": versions " + std::to_string(l.program_versions));
      ++trials;

      if (n >= 2) {
        providers::ScriptedProvider perfect;
        const auto fenced = "```\n" + *task.reference_program + "\n```";
        perfect.always(Stage::Generator, task.description)
            .always(Stage::Summarizer, "1. " + task.description)
            .always(Stage::Implementor, fenced)
            .always(Stage::Refinement, fenced);
        const auto p = pipeline::run_trial_hypothesis_search(corpus::trial(task, n), perfect, ex, config);
        c.expect(p.ledger.total_calls() <= 64 + 1 + 1,
                 where + ": perfect providers used " + std::to_string(p.ledger.total_calls()) + " calls");
        c.expect(p.train_solved, where + ": perfect providers did not solve training");
      }
    }
  }
  c.expect(trials == 110, "trials checked " + std::to_string(trials));
  const double took = seconds_since(start);
  c.expect(took < kBudgetSeconds, "runtime " + std::to_string(took) + " s");
  return c;
}

// 4 ---------------------------------------------------------------------------
Check determinism() {
  Check c;
  test::TempDir dir;
  const auto corpus_arg = "--corpus=" + test::mini_corpus_path().string();
  const std::vector<std::string> knobs = {"--runs=2", "--seed=11", "--p-gen=0.45", "--p-impl=0.7",
                                          "--p-rescue=0.25", "--p-retain=0.75"};
  auto with = [&](std::vector<std::string> head, std::vector<std::string> tail) {
    head.insert(head.end(), knobs.begin(), knobs.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  };
  std::string err;
  int code = invoke_cli(with({"run", corpus_arg, "--out=" + (dir / "rec").string(), "--record"}, {"--workers=3"}),
                        &err);
  c.expect(code == 0, "record exit code " + std::to_string(code) + ": " + err);
  if (code != 0) return c;
  code = invoke_cli(with({"replay", corpus_arg, "--out=" + (dir / "rep").string()},
                         {"--transcript=" + (dir / "rec" / "transcript.ndjson").string(), "--workers=1"}),
                    &err);
  c.expect(code == 0, "replay exit code " + std::to_string(code) + ": " + err);
  if (code != 0) return c;

  std::vector<harness::RunLog> logs;
  for (int r = 1; r <= 2; ++r) {
    const auto name = "run_" + std::to_string(r) + ".ndjson";
    const auto a = harness::read_text(dir / "rec" / name);
    const auto b = harness::read_text(dir / "rep" / name);
    c.expect(a == b, name + " differs between record and replay");
    logs.push_back(harness::parse_run_log(a));
    c.expect(logs.back().outcomes.size() == 110, name + " does not hold 110 outcomes");
  }

  // Brute force from raw outcomes, run-major order.
  const auto report = harness::compute_metrics(logs);
  for (int t = 1; t <= corpus::kTrialsPerTask; ++t) {
    double total = 0;
    for (const auto& log : logs) {
      std::set<std::string> acquired;
      for (const auto& o : log.outcomes)
        if (o.trial_index <= t && o.test_solved_any) acquired.insert(o.task_id);
      total += static_cast<double>(acquired.size());
    }
    const double expected = total / static_cast<double>(logs.size());
    c.expect(report.acquisition[static_cast<std::size_t>(t - 1)] == expected,
             "acquisition at trial " + std::to_string(t));
  }
  std::map<std::string, std::pair<double, int>> per_task;
  for (const auto& log : logs)
    for (const auto& o : log.outcomes) {
      if (o.infrastructure_failure) continue;
      per_task[o.task_id].first += o.test_accuracy;
      per_task[o.task_id].second += 1;
    }
  double sum = 0;
  for (const auto& [id, sn] : per_task) sum += sn.first / sn.second;
  const double mean = sum / static_cast<double>(per_task.size());
  c.expect(report.mean_test_accuracy == mean, "mean test accuracy differs from brute force");
  std::ostringstream note;
  note << "mean test accuracy " << report.mean_test_accuracy << ", final acquisition "
       << report.acquisition.back();
  c.notes.push_back(note.str());
  return c;
}

// 5 ---------------------------------------------------------------------------
Check interpreter_oracle() {
  Check c;
  const auto start = Clock::now();
  int checks = 0, agree = 0;
  for (const auto& task : test::mini_corpus().tasks()) {
    for (const auto& ex : task.examples) {
      ++checks;
      const auto r = dsl::evaluate_text(task.reference_program.value_or(""), ex.input);
      if (r.status == dsl::EvalStatus::Ok && *r.output == ex.output) ++agree;
    }
  }
  c.expect(checks == 110, "reference checks " + std::to_string(checks));
  c.expect(agree == checks, "reference agreement " + std::to_string(agree) + "/" + std::to_string(checks));

  std::mt19937_64 rng(0xacce97);
  std::uniform_int_distribution<std::size_t> budgets(1, 400);
  int passed = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto text = oracle::random_program(rng);
    const auto input = oracle::random_list(rng);
    bool ok = true;
    try {
      const auto program = dsl::parse(text);
      const auto canon = dsl::pretty(program);
      ok = ok && dsl::parse(canon) == program && dsl::pretty(dsl::parse(canon)) == canon;
      const std::size_t budget = i % 2 ? dsl::kDefaultStepBudget : budgets(rng);
      const auto a = dsl::evaluate(program, input, budget);
      ok = ok && a == dsl::evaluate(program, input, budget);
      ok = ok && a.steps_used <= budget;
      const auto want = oracle::run(text, input, budget);
      ok = ok && (a.status == dsl::EvalStatus::Ok) == want.ok;
      if (want.ok) ok = ok && a.output && *a.output == want.out && a.steps_used == want.steps;
      const auto empty = dsl::evaluate(program, dsl::List{}, dsl::kDefaultStepBudget);
      ok = ok && empty.status != dsl::EvalStatus::ArityOrNameError;
    } catch (const std::exception& e) {
      ok = false;
    }
    if (ok) {
      ++passed;
    } else {
      c.expect(false, "property case failed: " + text);
    }
  }
  c.expect(passed == 10000, "property cases " + std::to_string(passed) + "/10000");
  const double took = seconds_since(start);
  c.expect(took < kInterpreterSeconds, "runtime " + std::to_string(took) + " s");
  return c;
}

// 6 ---------------------------------------------------------------------------
Check statistics_oracles() {
  Check c;
  std::mt19937_64 rng(606);
  std::uniform_int_distribution<int> len(2, 15), val(-9, 9), cell(1, 80);
  double worst_r = 0, worst_or = 0, worst_fit = 0;
  int pearson_defined = 0;
  for (int i = 0; i < 1000; ++i) {
    // Pearson on integer data: exact sums, one rounding at the end.
    const int n = len(rng);
    std::vector<double> x, y;
    long long sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int k = 0; k < n; ++k) {
      const int a = val(rng), b = i % 2 ? val(rng) : a + val(rng) / 3;
      x.push_back(a);
      y.push_back(b);
      sx += a, sy += b, sxx += 1LL * a * a, syy += 1LL * b * b, sxy += 1LL * a * b;
    }
    const long long vx = n * sxx - sx * sx, vy = n * syy - sy * sy;
    const auto r = analysis::pearson(x, y);
    if (vx == 0 || vy == 0) {
      c.expect(!r, "pearson defined on zero variance");
    } else {
      ++pearson_defined;
      const double want = static_cast<double>(n * sxy - sx * sy) /
                          std::sqrt(static_cast<double>(vx) * static_cast<double>(vy));
      c.expect(r.has_value(), "pearson undefined on valid data");
      if (r) worst_r = std::max(worst_r, std::fabs(*r - want));
    }

    // Odds ratio: closed form and logistic fit.
    const int a = cell(rng), b = cell(rng), cc = cell(rng), d = cell(rng);
    const auto o = analysis::odds_ratio(a, b, cc, d);
    const double closed = (static_cast<double>(a) * d) / (static_cast<double>(b) * cc);
    worst_or = std::max(worst_or, std::fabs(o.value - closed));
    const auto fit = analysis::fit_logistic(o);
    c.expect(fit.converged, "logistic fit did not converge");
    worst_fit = std::max(worst_fit, std::fabs(std::exp(fit.slope) - o.value));
  }
  c.expect(worst_r <= kOracleTol, "pearson max error " + std::to_string(worst_r));
  c.expect(worst_or <= kOracleTol, "odds ratio max error " + std::to_string(worst_or));
  c.expect(worst_fit <= kOracleTol, "logistic odds ratio max error " + std::to_string(worst_fit));
  c.expect(pearson_defined > 900, "too few defined pearson instances");
  std::ostringstream note;
  note << "max |Δ| pearson " << worst_r << ", odds " << worst_or << ", logistic " << worst_fit;
  c.notes.push_back(note.str());
  return c;
}

// 7 ---------------------------------------------------------------------------
Check tie_averaging() {
  Check c;
  exec::Executor ex;
  corpus::TrialSpec trial;
  trial.task_id = "constructed";
  trial.trial_index = 2;
  trial.training = {{{1, 2, 3}, {3, 2, 1}}};
  trial.test = {{5, 4}, {4, 5}};
  // reverse and sort|reverse both fit the training example; only reverse is
  // right on the test.
  std::vector<pipeline::CandidateProgram> cands;
  for (const char* text : {"reverse", "sort | reverse"}) {
    pipeline::CandidateProgram cand;
    pipeline::ProgramVersion v{text, 0, {}};
    const auto r = ex.run_candidate(text, trial.training);
    v.report.matches = r.matches;
    v.report.total = r.total();
    v.report.all_passed = r.all_passed;
    cand.versions.push_back(v);
    cands.push_back(cand);
  }
  pipeline::TrialOutcome o;
  o.selected = pipeline::select_tied(cands, ex);
  c.expect(o.selected.size() == 2, "tie set size " + std::to_string(o.selected.size()));
  for (const auto& s : o.selected) c.expect(s.train_accuracy == 1.0, "tied program below 1.0");
  pipeline::score_selection(o, trial.test, ex);
  c.expect(o.test_accuracy == 0.5, "test_accuracy " + std::to_string(o.test_accuracy));
  c.expect(o.test_solved_any, "test_solved_any false");
  return c;
}

// 8 ---------------------------------------------------------------------------
Check perfect_ceiling() {
  Check c;
  harness::ExperimentConfig config;
  config.n_runs = 2;
  exec::Executor ex;
  providers::SyntheticConfig perfect;
  perfect.p_gen = 1.0;
  perfect.p_impl = 1.0;
  const auto logs = harness::run_experiment(test::mini_corpus(), config, harness::synthetic_factory(perfect), ex);
  const auto curve = harness::acquisition_curve(logs, harness::Definition::Cumulative);
  for (int t = 2; t <= corpus::kTrialsPerTask; ++t) {
    c.expect(curve[static_cast<std::size_t>(t - 1)] == 10.0,
             "acquisition at trial " + std::to_string(t) + " = " + std::to_string(curve[static_cast<std::size_t>(t - 1)]));
  }
  double sum = 0;
  int n = 0;
  for (const auto& log : logs)
    for (const auto& o : log.outcomes)
      if (o.trial_index >= 2) {
        sum += o.test_accuracy;
        ++n;
      }
  c.expect(n == 200, "outcomes at trials >= 2: " + std::to_string(n));
  c.expect(sum / n == 1.0, "mean test accuracy over trials >= 2: " + std::to_string(sum / n));
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Check()>>> criteria = {
      {"table2-fixture", table2_fixture},
      {"structural-zero", structural_zero},
      {"budget-invariants", budget_invariants},
      {"end-to-end-determinism", determinism},
      {"interpreter-oracle", interpreter_oracle},
      {"statistics-oracles", statistics_oracles},
      {"tie-averaging", tie_averaging},
      {"perfect-provider-ceiling", perfect_ceiling},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto start = Clock::now();
    Check result;
    try {
      result = fn();
    } catch (const std::exception& e) {
      result.expect(false, std::string("exception: ") + e.what());
    }
    std::printf("%s %s (%.2f s)\n", result.ok ? "PASS" : "FAIL", name.c_str(), seconds_since(start));
    for (const auto& f : result.failures) std::printf("    %s\n", f.c_str());
    for (const auto& n : result.notes) std::printf("    note: %s\n", n.c_str());
    failed += result.ok ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
