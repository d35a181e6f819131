#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "indukt/corpus.hpp"
#include "indukt/harness.hpp"
#include "indukt/prompts.hpp"
#include "indukt/providers.hpp"

namespace indukt::analysis {

using harness::RunLog;

// ---------------------------------------------------------------------------
// Judging

enum class JudgeMode { Exact, Normalized, Provider };

std::string_view to_string(JudgeMode mode);

struct JudgeConfig {
  JudgeMode mode = JudgeMode::Exact;
  providers::ProviderPtr provider;  // Provider mode only
  bool exact_shortcut = true;       // identical text is correct without a call
  providers::SamplingProfile profile;
  const prompts::PromptSet* prompts = nullptr;
};

struct Judgement {
  std::optional<bool> verdict;  // nullopt: provider failed; excluded from denominators
  bool called = false;
  std::string degradation;      // non-empty for unparseable replies or failures
};

/// "INCORRECT" wins over "CORRECT"; neither token means unparseable.
std::optional<bool> parse_verdict(std::string_view reply);

/// Memoizes verdicts per (hypothesis, ground truth) pair.
class Judge {
public:
  explicit Judge(JudgeConfig config);

  /// Throws std::invalid_argument for an empty ground truth.
  Judgement judge(const std::string& hypothesis, const std::string& ground_truth,
                  const std::string& scope = {});

  std::size_t calls() const noexcept { return calls_; }

private:
  JudgeConfig config_;
  std::map<std::pair<std::string, std::string>, Judgement> memo_;
  std::size_t calls_ = 0;
};

struct ModuleVerdicts {
  int run_id = 0;
  std::string task_id;
  int trial_index = 1;
  bool generator_ok = false;
  bool summarizer_ok = false;
  bool implementor_train_ok = false;
  bool implementor_test_ok = false;
  int generator_correct_count = 0;   // 0..64
  int summarizer_correct_count = 0;  // 0..8
  bool retained_correct = false;
  int program_versions = 0;
  bool missing = false;  // infrastructure failure or a missing verdict
  std::vector<std::string> events;
};

/// Judges every hypothesis of every hypothesis-search outcome against its
/// task description. Throws std::invalid_argument for direct-mode logs or
/// tasks absent from the corpus.
std::vector<ModuleVerdicts> judge_logs(std::span<const RunLog> logs, const corpus::Corpus& corpus,
                                       Judge& judge);

// ---------------------------------------------------------------------------
// Contingency table

struct ContingencyTable {
  /// Index g*8 + s*4 + it*2 + ie, with 1 = success. This is also the row
  /// order of the published error-analysis table.
  std::array<std::int64_t, 16> cells{};
  std::optional<std::int64_t> declared_total;

  static constexpr std::size_t index(bool g, bool s, bool it, bool ie) noexcept {
    return (g ? 8u : 0u) + (s ? 4u : 0u) + (it ? 2u : 0u) + (ie ? 1u : 0u);
  }
  std::int64_t cell(bool g, bool s, bool it, bool ie) const noexcept { return cells[index(g, s, it, ie)]; }
  std::int64_t cell_sum() const noexcept;
  /// Declared total when present, else the cell sum.
  std::int64_t total() const noexcept { return declared_total.value_or(cell_sum()); }

  friend bool operator==(const ContingencyTable&, const ContingencyTable&) = default;
};

/// The bundled 16-count fixture. Its cells sum to 5509; the declared total
/// is the published 5500.
ContingencyTable table2_fixture();

/// Counts non-missing verdicts.
ContingencyTable build_contingency(std::span<const ModuleVerdicts> verdicts);

/// Throws std::invalid_argument unless every unflagged outcome has a verdict.
void check_coverage(std::span<const RunLog> logs, std::span<const ModuleVerdicts> verdicts);

/// All (G=fail, S=success) cells are zero.
bool structural_zero_holds(const ContingencyTable& table);

struct Marginals {
  double generator = 0.0;
  double summarizer = 0.0;
  double implementor_train = 0.0;
  double implementor_test = 0.0;
};

struct DerivedRates {
  std::int64_t total = 0;
  std::int64_t cell_sum = 0;
  std::int64_t test_successes = 0;
  double overall_test_rate = 0.0;
  Marginals marginals;           // over total()
  Marginals marginals_cell_sum;  // over cell_sum()
  std::int64_t double_failures = 0;  // G fail and S fail
  std::int64_t rescued = 0;          // double failures with IE success
  double rescue_rate_total = 0.0;
  double rescue_rate_double_failures = 0.0;
  std::int64_t g_ok_s_fail = 0;
  std::int64_t g_ok_s_fail_test_ok = 0;
  double p_test_given_g_ok_s_fail = 0.0;
  std::int64_t both_ok = 0;
  std::int64_t both_ok_test_ok = 0;
  double p_test_given_both_ok = 0.0;
  double retention = 0.0;  // P(S ok | G ok)
};

/// Throws std::invalid_argument when the total is zero.
DerivedRates derived_rates(const ContingencyTable& table);

// ---------------------------------------------------------------------------
// Association statistics

enum class Outcome { ImplementorTrain, ImplementorTest };

std::string_view to_string(Outcome outcome);

struct OddsRatio {
  // a: G ok & outcome ok, b: G ok & outcome fail,
  // c: G fail & outcome ok, d: G fail & outcome fail
  std::int64_t a = 0, b = 0, c = 0, d = 0;
  double value = 0.0;
  bool degenerate = false;  // some cell is zero: value is 0, +inf or NaN
};

OddsRatio odds_ratio(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d);
/// Predictor is the generator verdict.
OddsRatio odds_ratio(const ContingencyTable& table, Outcome outcome);

struct BinomialGroup {
  double x = 0.0;
  double successes = 0.0;
  double trials = 0.0;
};

struct LogisticFit {
  double intercept = 0.0;
  double slope = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Maximum-likelihood fit of logit p = intercept + slope*x by Newton's method.
LogisticFit fit_logistic(std::span<const BinomialGroup> groups, int max_iterations = 100,
                         double tolerance = 1e-12);

/// Fit on the collapsed 2×2 table; exp(slope) is the odds ratio.
LogisticFit fit_logistic(const OddsRatio& table);

/// nullopt for fewer than two points or zero variance in either series.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

struct CorrelationReport {
  std::optional<double> trial_train;  // G vs implementor train, per trial
  std::optional<double> trial_test;
  std::optional<double> task_train;   // per-task means
  std::optional<double> task_test;
  std::size_t trials = 0;
  std::size_t tasks = 0;
};

CorrelationReport correlations(std::span<const ModuleVerdicts> verdicts);

// ---------------------------------------------------------------------------
// Refinement cost and retention

enum class Split { TrainOutcome, TestOutcome };

std::string_view to_string(Split split);

struct CostSummary {
  Split split = Split::TrainOutcome;
  std::size_t success_n = 0;
  double success_mean = 0.0;
  std::size_t failure_n = 0;
  double failure_mean = 0.0;

  double success_fraction() const noexcept;  // of the 256-version budget
  double failure_fraction() const noexcept;
};

/// Mean program versions per unflagged trial, split by outcome.
CostSummary refinement_costs(std::span<const RunLog> logs, Split split);

/// Among non-missing trials with generator_ok, the fraction with
/// retained_correct. nullopt when there are none.
std::optional<double> retention_rate(std::span<const ModuleVerdicts> verdicts);

struct ModuleAccuracy {
  std::string module;
  double pooled = 0.0;     // over all non-missing trials
  double task_mean = 0.0;  // mean of per-task means
  double task_std = 0.0;   // population std of per-task means
  std::size_t trials = 0;
};

std::vector<ModuleAccuracy> module_accuracy(std::span<const ModuleVerdicts> verdicts);

// ---------------------------------------------------------------------------
// Report

struct AnalysisReport {
  std::string source;  // "fixture:table2" or "logs"
  ContingencyTable table;
  DerivedRates rates;
  OddsRatio odds_train;
  OddsRatio odds_test;
  bool structural_zero = false;
  std::vector<ModuleAccuracy> modules;
  std::optional<CorrelationReport> correlation;
  std::optional<CostSummary> costs_train;
  std::optional<CostSummary> costs_test;
  std::optional<double> retention;
  std::size_t judge_calls = 0;
  std::size_t missing = 0;
  std::vector<std::string> notes;
};

AnalysisReport analyze_table(const ContingencyTable& table, std::string source);
AnalysisReport analyze_logs(std::span<const RunLog> logs, const corpus::Corpus& corpus, Judge& judge);

nlohmann::json to_json(const AnalysisReport& report);

/// Rows in table order: index,generator,summarizer,implementor_train,
/// implementor_test,count,proportion_pct.
std::string table2_csv(const ContingencyTable& table);
/// module,mean_accuracy,std
std::string table3_csv(const AnalysisReport& report);

}  // namespace indukt::analysis
