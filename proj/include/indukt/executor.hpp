#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "indukt/corpus.hpp"

namespace indukt::exec {

using corpus::Example;
using dsl::List;

enum class Backend { BuiltinDsl, ExternalSandbox };

std::string_view to_string(Backend backend);
Backend backend_from_string(std::string_view name);

enum class ExampleStatus { Match, Mismatch, ExecutionError };

std::string_view to_string(ExampleStatus status);

struct ExampleResult {
  List input;
  List expected;
  std::optional<List> actual;
  ExampleStatus status = ExampleStatus::ExecutionError;
  std::string error_message;  // empty iff status == Match
};

/// An empty report (no examples) never passes and has accuracy 0.
struct ExecutionReport {
  std::vector<ExampleResult> results;
  std::size_t matches = 0;
  double train_accuracy = 0.0;
  bool all_passed = false;

  std::size_t total() const noexcept { return results.size(); }
};

struct ExecutorConfig {
  Backend backend = Backend::BuiltinDsl;
  std::size_t step_budget = dsl::kDefaultStepBudget;         // builtin only
  std::chrono::milliseconds wall_clock_limit{2000};           // sandbox only, per example
  std::size_t memory_cap_mib = 256;                           // sandbox only
  std::vector<std::string> sandbox_command;                   // argv of the worker
  std::size_t workers = 0;                                    // 0: hardware concurrency

  /// Throws std::invalid_argument on non-positive limits.
  void validate() const;
};

/// The sandbox worker cannot be started or stopped answering altogether.
/// Distinct from a per-example execution error.
class SandboxUnavailable : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Prediction {
  std::optional<List> output;
  std::string error;  // empty iff output present

  bool ok() const noexcept { return output.has_value(); }
};

class SandboxPool;

/// Thread-safe. Sandbox executions each use a pooled worker process.
class Executor {
public:
  explicit Executor(ExecutorConfig config = {});
  ~Executor();
  Executor(const Executor&) = delete;
  Executor& operator=(const Executor&) = delete;

  const ExecutorConfig& config() const noexcept { return config_; }

  /// Throws std::invalid_argument when `examples` is empty.
  ExecutionReport run_candidate(std::string_view program_text,
                                std::span<const Example> examples) const;

  Prediction predict(std::string_view program_text, std::span<const dsl::Value> input) const;

  /// Compile-only diagnostic; nullopt when the program is well formed or
  /// the backend cannot tell without running it.
  std::optional<std::string> check(std::string_view program_text) const;

  /// Canonical text for deduplication (pretty-printed DSL, else trimmed).
  std::string canonical(std::string_view program_text) const;

  /// Whether `text` is a complete program for this backend (used when
  /// extracting programs from model output).
  bool parses(std::string_view text) const;

private:
  Prediction run_one(std::string_view program_text, std::span<const dsl::Value> input) const;

  ExecutorConfig config_;
  std::unique_ptr<SandboxPool> pool_;
};

/// Error report appended to refinement prompts: the first `max_examples`
/// failing examples, each line cut to `max_chars` characters.
std::string refinement_feedback(const ExecutionReport& report, std::size_t max_examples = 3,
                                std::size_t max_chars = 200);

std::string mismatch_message(std::span<const dsl::Value> expected, std::span<const dsl::Value> actual);

}  // namespace indukt::exec
