#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "indukt/corpus.hpp"
#include "indukt/executor.hpp"
#include "indukt/prompts.hpp"
#include "indukt/providers.hpp"

namespace indukt::pipeline {

inline constexpr int kGeneratorSamples = 64;
inline constexpr int kSummaries = prompts::kSummaryCount;
inline constexpr int kCandidatesPerHypothesis = 8;
inline constexpr int kMaxRefinementRounds = 3;
inline constexpr int kMaxVersionsPerTrial =
    kSummaries * kCandidatesPerHypothesis * (1 + kMaxRefinementRounds);  // 256

inline constexpr std::string_view kNoHypothesis = "(no hypothesis)";
inline constexpr std::string_view kFallbackProgram = "identity";

enum class Mode { HypothesisSearch, Direct };

std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view name);

/// How the initial 8-sample implementor batch is charged.
///   paper:  not charged; calls <= 64 + 1 + 192 = 257
///   strict: 1 call per batch;  calls <= 64 + 1 + 8 + 192 = 265
enum class BudgetAccounting { Paper, Strict };

std::string_view to_string(BudgetAccounting accounting);
BudgetAccounting accounting_from_string(std::string_view name);

int max_calls(BudgetAccounting accounting);

struct Hypothesis {
  enum class Source { Generator, Summarizer };

  std::string text;
  Source source = Source::Generator;
  int index = 1;                    // 1..64 for the generator, 1..8 for summaries
  std::vector<int> parent_indices;  // generator indices condensed into a summary, if known

  friend bool operator==(const Hypothesis&, const Hypothesis&) = default;
};

/// Execution result of one program version, without the example payloads.
struct VersionReport {
  std::size_t matches = 0;
  std::size_t total = 0;
  bool all_passed = false;
  std::vector<exec::ExampleStatus> statuses;
  std::string feedback;  // error report used for refinement; empty when passed

  double train_accuracy() const noexcept {
    return total ? static_cast<double>(matches) / static_cast<double>(total) : 0.0;
  }

  friend bool operator==(const VersionReport&, const VersionReport&) = default;
};

struct ProgramVersion {
  std::string text;
  int round = 0;  // 0 initial, then 1..3
  VersionReport report;

  friend bool operator==(const ProgramVersion&, const ProgramVersion&) = default;
};

struct CandidateProgram {
  int hypothesis_slot = 1;  // 1..8; 0 for direct generation
  int candidate_index = 1;  // 1..8
  std::vector<ProgramVersion> versions;
  bool frozen = false;      // provider failed during refinement

  /// Latest version among those with the best train accuracy.
  const ProgramVersion& best() const;
  double final_train_accuracy() const { return best().report.train_accuracy(); }
  bool passed() const;

  friend bool operator==(const CandidateProgram&, const CandidateProgram&) = default;
};

struct BudgetLedger {
  int generator_calls = 0;
  int summarizer_calls = 0;
  int implementor_calls = 0;
  int program_versions = 0;
  std::chrono::milliseconds wall_time{0};  // not serialized

  int total_calls() const noexcept { return generator_calls + summarizer_calls + implementor_calls; }

  bool operator==(const BudgetLedger& o) const noexcept {
    return generator_calls == o.generator_calls && summarizer_calls == o.summarizer_calls &&
           implementor_calls == o.implementor_calls && program_versions == o.program_versions;
  }
};

struct SelectedProgram {
  std::string text;
  double train_accuracy = 0.0;
  bool test_correct = false;
  std::optional<dsl::List> test_output;
  std::string test_error;

  friend bool operator==(const SelectedProgram&, const SelectedProgram&) = default;
};

struct TrialOutcome {
  std::string task_id;
  int run_id = 0;
  int trial_index = 1;
  Mode mode = Mode::HypothesisSearch;
  std::vector<Hypothesis> generated;  // 64
  std::vector<Hypothesis> summaries;  // <= 8
  std::vector<CandidateProgram> candidates;
  std::vector<SelectedProgram> selected;
  bool used_fallback = false;  // selection fell back to the identity program
  bool train_solved = false;
  double test_accuracy = 0.0;
  bool test_solved_any = false;
  BudgetLedger ledger;
  std::vector<std::string> events;  // degradations, in order
  std::optional<std::string> infrastructure_failure;

  friend bool operator==(const TrialOutcome&, const TrialOutcome&) = default;
};

struct PipelineConfig {
  providers::SamplingProfile profile;
  BudgetAccounting accounting = BudgetAccounting::Paper;
  /// One n=64 request instead of 64 single-sample requests. Either way the
  /// ledger charges 64 generator calls.
  bool generator_multi_sample = true;
  const prompts::PromptSet* prompts = nullptr;  // nullptr: bundled defaults

  const prompts::PromptSet& prompt_set() const {
    return prompts ? *prompts : prompts::PromptSet::defaults();
  }
};

/// Identity of one trial execution; `scope` tags every request it issues.
struct TrialContext {
  int run_id = 0;
  std::string scope;
};

/// Mutable state threaded through the stages of one trial.
struct TrialState {
  BudgetLedger ledger;
  std::vector<std::string> events;
};

std::vector<Hypothesis> generate_hypotheses(const corpus::TrialSpec& trial,
                                            providers::Provider& provider,
                                            const PipelineConfig& config,
                                            const TrialContext& context, TrialState& state);

/// Parses "1. rule" / "1) rule" lines.
std::vector<std::string> parse_summaries(std::string_view response);

std::vector<Hypothesis> summarize(const std::vector<Hypothesis>& generated,
                                  providers::Provider& provider, const PipelineConfig& config,
                                  const TrialContext& context, TrialState& state);

struct Implementation {
  std::vector<CandidateProgram> candidates;
  bool solved = false;
};

Implementation implement(const Hypothesis& hypothesis, int slot, const corpus::TrialSpec& trial,
                         providers::Provider& provider, const exec::Executor& executor,
                         const PipelineConfig& config, const TrialContext& context,
                         TrialState& state);

/// First fenced code block, else the longest line that parses, else the
/// whole response (trimmed).
std::string extract_program(std::string_view response, const exec::Executor& executor);

/// All candidates tied at the best final train accuracy, one per canonical
/// program text.
std::vector<SelectedProgram> select_tied(const std::vector<CandidateProgram>& candidates,
                                         const exec::Executor& executor);

/// Tests the selection on the held-out example and fills test fields.
void score_selection(TrialOutcome& outcome, const corpus::Example& test,
                     const exec::Executor& executor);

TrialOutcome run_trial_hypothesis_search(const corpus::TrialSpec& trial,
                                         providers::Provider& provider,
                                         const exec::Executor& executor,
                                         const PipelineConfig& config,
                                         const TrialContext& context = {});

TrialOutcome run_trial_direct(const corpus::TrialSpec& trial, providers::Provider& provider,
                              const exec::Executor& executor, const PipelineConfig& config,
                              const TrialContext& context = {});

TrialOutcome run_trial(Mode mode, const corpus::TrialSpec& trial, providers::Provider& provider,
                       const exec::Executor& executor, const PipelineConfig& config,
                       const TrialContext& context = {});

}  // namespace indukt::pipeline
