#include "indukt/executor.hpp"

#include <thread>

#include "indukt/sandbox.hpp"
#include "indukt/util.hpp"

namespace indukt::exec {

std::string_view to_string(Backend backend) {
  return backend == Backend::BuiltinDsl ? "builtin_dsl" : "external_sandbox";
}

Backend backend_from_string(std::string_view name) {
  if (name == "builtin_dsl" || name == "builtin" || name == "dsl") return Backend::BuiltinDsl;
  if (name == "external_sandbox" || name == "sandbox") return Backend::ExternalSandbox;
  throw std::invalid_argument("unknown executor backend '" + std::string(name) + "'");
}

std::string_view to_string(ExampleStatus status) {
  switch (status) {
    case ExampleStatus::Match:
      return "match";
    case ExampleStatus::Mismatch:
      return "mismatch";
    case ExampleStatus::ExecutionError:
      return "execution_error";
  }
  return "execution_error";
}

void ExecutorConfig::validate() const {
  if (step_budget == 0) throw std::invalid_argument("step budget must be positive");
  if (wall_clock_limit.count() <= 0) throw std::invalid_argument("wall-clock limit must be positive");
  if (memory_cap_mib == 0) throw std::invalid_argument("memory cap must be positive");
  if (backend == Backend::ExternalSandbox && sandbox_command.empty()) {
    throw std::invalid_argument("external_sandbox backend needs a worker command");
  }
}

std::string mismatch_message(std::span<const dsl::Value> expected,
                             std::span<const dsl::Value> actual) {
  return "expected " + dsl::format_list(expected) + ", got " + dsl::format_list(actual);
}

Executor::Executor(ExecutorConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.backend == Backend::ExternalSandbox) {
    const std::size_t width = config_.workers ? config_.workers
                                              : std::max(1u, std::thread::hardware_concurrency());
    pool_ = std::make_unique<SandboxPool>(config_.sandbox_command, width, config_.memory_cap_mib);
  }
}

Executor::~Executor() = default;

Prediction Executor::run_one(std::string_view program_text,
                             std::span<const dsl::Value> input) const {
  if (pool_) return pool_->run(program_text, input, config_.wall_clock_limit);
  const auto r = dsl::evaluate_text(program_text, input, config_.step_budget);
  if (r.status == dsl::EvalStatus::Ok) return {r.output, {}};
  return {std::nullopt, r.diagnostic};
}

ExecutionReport Executor::run_candidate(std::string_view program_text,
                                        std::span<const Example> examples) const {
  if (examples.empty()) throw std::invalid_argument("run_candidate needs at least one example");

  ExecutionReport report;
  report.results.reserve(examples.size());

  // Parse once for the builtin backend; a syntax error fails every example.
  std::optional<dsl::Program> program;
  std::string parse_error;
  if (!pool_) {
    try {
      program = dsl::parse(program_text);
    } catch (const dsl::ParseError& e) {
      parse_error = e.what();
    }
  }

  for (const auto& ex : examples) {
    ExampleResult r;
    r.input = ex.input;
    r.expected = ex.output;
    Prediction p;
    if (!pool_) {
      if (program) {
        auto out = dsl::evaluate(*program, ex.input, config_.step_budget);
        if (out.status == dsl::EvalStatus::Ok) {
          p.output = std::move(out.output);
        } else {
          p.error = out.diagnostic;
        }
      } else {
        p.error = parse_error;
      }
    } else {
      p = pool_->run(program_text, ex.input, config_.wall_clock_limit);
    }

    if (!p.ok()) {
      r.status = ExampleStatus::ExecutionError;
      r.error_message = p.error;
    } else if (*p.output == ex.output) {
      r.status = ExampleStatus::Match;
      r.actual = std::move(p.output);
      ++report.matches;
    } else {
      r.status = ExampleStatus::Mismatch;
      r.error_message = mismatch_message(ex.output, *p.output);
      r.actual = std::move(p.output);
    }
    report.results.push_back(std::move(r));
  }
  report.train_accuracy =
      static_cast<double>(report.matches) / static_cast<double>(report.results.size());
  report.all_passed = report.matches == report.results.size();
  return report;
}

Prediction Executor::predict(std::string_view program_text,
                             std::span<const dsl::Value> input) const {
  return run_one(program_text, input);
}

std::optional<std::string> Executor::check(std::string_view program_text) const {
  if (pool_) return std::nullopt;
  try {
    dsl::parse(program_text);
    return std::nullopt;
  } catch (const dsl::ParseError& e) {
    return std::string(e.what());
  }
}

std::string Executor::canonical(std::string_view program_text) const {
  if (!pool_) {
    try {
      return dsl::pretty(dsl::parse(program_text));
    } catch (const dsl::ParseError&) {
    }
  }
  return trim(program_text);
}

bool Executor::parses(std::string_view text) const {
  if (pool_) return !trim(text).empty();
  try {
    dsl::parse(text);
    return true;
  } catch (const dsl::ParseError&) {
    return false;
  }
}

std::string refinement_feedback(const ExecutionReport& report, std::size_t max_examples,
                                std::size_t max_chars) {
  if (report.results.empty()) {
    return "No training examples are available yet, so the program could not be checked.";
  }
  std::string out;
  std::size_t shown = 0;
  std::size_t failing = 0;
  for (const auto& r : report.results) {
    if (r.status == ExampleStatus::Match) continue;
    ++failing;
    if (shown == max_examples) continue;
    std::string line = "Input " + dsl::format_list(r.input) + ": " +
                       (r.status == ExampleStatus::Mismatch ? r.error_message
                                                            : "execution error: " + r.error_message);
    if (line.size() > max_chars) line.resize(max_chars);
    if (!out.empty()) out += '\n';
    out += line;
    ++shown;
  }
  if (failing == 0) return "All examples passed.";
  if (failing > shown) {
    out += "\n(" + std::to_string(failing - shown) + " more failing example" +
           (failing - shown == 1 ? "" : "s") + " not shown)";
  }
  return out;
}

}  // namespace indukt::exec
