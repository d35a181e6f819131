#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "indukt/corpus.hpp"
#include "indukt/executor.hpp"
#include "indukt/pipeline.hpp"
#include "indukt/providers.hpp"

namespace indukt::harness {

using pipeline::Mode;
using pipeline::TrialOutcome;

inline constexpr int kSchemaVersion = 1;
inline constexpr int kTrials = corpus::kTrialsPerTask;

// ---------------------------------------------------------------------------
// Run logs

struct RunHeader {
  int schema_version = kSchemaVersion;
  int run_id = 1;
  Mode mode = Mode::HypothesisSearch;
  std::string provider;            // Provider::describe()
  std::string corpus_fingerprint;
  nlohmann::json config = nlohmann::json::object();

  friend bool operator==(const RunHeader&, const RunHeader&) = default;
};

/// One run: tasks × 11 outcomes ordered by (task order in corpus, trial).
struct RunLog {
  RunHeader header;
  std::vector<TrialOutcome> outcomes;

  std::size_t flagged() const;

  friend bool operator==(const RunLog&, const RunLog&) = default;
};

class LogFormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const TrialOutcome& outcome);
TrialOutcome outcome_from_json(const nlohmann::json& j);

/// NDJSON: header line, then one outcome per line. wall_time is not written.
std::string serialize_run_log(const RunLog& log);
RunLog parse_run_log(std::string_view text);
void write_run_log(const RunLog& log, const std::filesystem::path& path);
RunLog read_run_log(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Experiment

/// Returns the provider for one (task, trial, run). May return a shared
/// instance. `run_seed` is derived from the master seed and run index.
using ProviderFactory = std::function<providers::ProviderPtr(
    const corpus::Task& task, int trial_index, int run_id, std::uint64_t run_seed)>;

struct ExperimentConfig {
  Mode mode = Mode::HypothesisSearch;
  pipeline::PipelineConfig pipeline;
  int n_runs = 5;
  std::uint64_t master_seed = 0;
  std::size_t workers = 1;
  double max_flagged_fraction = 0.01;
  std::string provider_description;
  nlohmann::json snapshot = nlohmann::json::object();
};

std::uint64_t run_seed(std::uint64_t master_seed, int run_id);

/// Scope string that tags every request of one trial.
std::string trial_scope(int run_id, std::string_view task_id, int trial_index);

/// A run exceeded the flagged-trial threshold. Carries every log so the
/// caller can still persist them.
class ExperimentFailed : public std::runtime_error {
public:
  ExperimentFailed(std::string message, std::vector<RunLog> logs);
  const std::vector<RunLog>& logs() const noexcept { return logs_; }

private:
  std::vector<RunLog> logs_;
};

/// Runs every (run, task, trial) on a pool of `config.workers` threads and
/// assembles the logs in order. ReplayMiss and other non-provider errors
/// propagate after the pool drains.
std::vector<RunLog> run_experiment(const corpus::Corpus& corpus, const ExperimentConfig& config,
                                   const ProviderFactory& factory,
                                   const exec::Executor& executor);

/// Synthetic providers bound to each task's ground truth.
ProviderFactory synthetic_factory(providers::SyntheticConfig base);

// ---------------------------------------------------------------------------
// Metrics

enum class Definition { Cumulative, PerTrial };

std::string_view to_string(Definition d);
Definition definition_from_string(std::string_view name);

class IncompatibleLogs : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Throws IncompatibleLogs for mixed corpora, modes or schema versions.
void check_compatible(std::span<const RunLog> logs);

using Curve = std::array<double, kTrials>;

Curve acquisition_curve(std::span<const RunLog> logs, Definition definition = Definition::Cumulative);

struct TaskAccuracy {
  std::string task_id;
  double mean = 0.0;
  std::size_t outcomes = 0;  // unflagged outcomes averaged

  friend bool operator==(const TaskAccuracy&, const TaskAccuracy&) = default;
};

/// Per-task mean test accuracy over unflagged outcomes, sorted by task id.
std::vector<TaskAccuracy> per_task_accuracy(std::span<const RunLog> logs);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

MeanStd mean_test_accuracy(std::span<const RunLog> logs);
MeanStd mean_std(std::span<const double> values);

struct MetricsReport {
  Definition definition = Definition::Cumulative;
  int n_runs = 0;
  Curve acquisition{};
  double mean_test_accuracy = 0.0;
  double std_test_accuracy = 0.0;
  std::vector<TaskAccuracy> per_task;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

MetricsReport compute_metrics(std::span<const RunLog> logs,
                              Definition definition = Definition::Cumulative);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const nlohmann::json& j);

/// "trial,mean_acquired" + 11 rows.
std::string acquisition_csv(const Curve& curve);
Curve parse_acquisition_csv(std::string_view text);

/// "task_id,mean_test_accuracy,outcomes", sorted by task id.
std::string per_task_csv(const std::vector<TaskAccuracy>& rows);
std::vector<TaskAccuracy> parse_per_task_csv(std::string_view text);

/// Published summary numbers, shipped for side-by-side comparison only.
struct LiteratureValue {
  std::string label;
  double mean = 0.0;
  double std = 0.0;
};

std::vector<LiteratureValue> load_literature(const std::filesystem::path& path);

/// "source,label,mean_test_accuracy,std": this run first, then the overlay.
std::string summary_csv(const MetricsReport& report, const std::vector<LiteratureValue>& overlay);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace indukt::harness
