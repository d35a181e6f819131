#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "indukt/dsl.hpp"

namespace indukt::corpus {

using dsl::List;

inline constexpr int kTrialsPerTask = 11;
inline constexpr std::size_t kMaxListLength = 64;
inline constexpr dsl::Value kMinValue = -1000;
inline constexpr dsl::Value kMaxValue = 1000;

struct Example {
  List input;
  List output;

  friend bool operator==(const Example&, const Example&) = default;
};

struct Task {
  std::string id;
  std::string description;
  std::vector<Example> examples;  // exactly kTrialsPerTask
  std::optional<std::string> reference_program;

  friend bool operator==(const Task&, const Task&) = default;
};

/// Trial n shows the first n-1 examples and asks for the n-th.
struct TrialSpec {
  std::string task_id;
  int trial_index = 1;
  std::vector<Example> training;
  Example test;
};

/// Malformed corpus file (JSON syntax or schema).
class ParseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Semantic check failed. `task_id` names the offending task.
class ValidationError : public std::runtime_error {
public:
  ValidationError(std::string task_id, const std::string& message);
  const std::string& task_id() const noexcept { return task_id_; }

private:
  std::string task_id_;
};

/// Immutable after construction.
class Corpus {
public:
  Corpus() = default;
  /// Validates every task; throws ValidationError on the first violation.
  explicit Corpus(std::vector<Task> tasks);

  std::span<const Task> tasks() const noexcept { return tasks_; }
  std::size_t size() const noexcept { return tasks_.size(); }
  const Task& at(std::string_view id) const;
  const Task* find(std::string_view id) const noexcept;

  /// Stable content hash (hex), used to detect logs from different corpora.
  std::string fingerprint() const;

  friend bool operator==(const Corpus&, const Corpus&) = default;

private:
  std::vector<Task> tasks_;
};

void validate(const Task& task);

Corpus parse_corpus(std::string_view json_text);
Corpus load_corpus(const std::filesystem::path& path);
std::string serialize_corpus(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// Throws std::out_of_range unless 1 <= n <= kTrialsPerTask.
TrialSpec trial(const Task& task, int n);

/// Throws std::invalid_argument when the task has no reference program.
std::vector<List> oracle_outputs(const Task& task, std::span<const List> inputs);

}  // namespace indukt::corpus
