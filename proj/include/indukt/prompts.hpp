#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "indukt/corpus.hpp"
#include "indukt/providers.hpp"

namespace indukt::prompts {

using providers::Message;
using providers::Stage;

inline constexpr int kSummaryCount = 8;

/// Everything a template may reference. Which fields are required depends on
/// the stage.
struct PromptContext {
  std::optional<std::vector<corpus::Example>> examples;
  std::optional<std::vector<std::string>> hypotheses;
  std::optional<std::string> hypothesis;
  std::optional<std::string> program;
  std::optional<std::string> error;
  std::optional<std::string> ground_truth;
};

class PromptError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A template is a system and/or user section with {{slot}} placeholders.
struct Template {
  std::string system;
  std::string user;
};

Template parse_template(std::string_view text);

class PromptSet {
public:
  /// Templates bundled at build time from data/prompts.
  static const PromptSet& defaults();
  /// Reads <dir>/<stage>.txt for each stage; missing files fall back to defaults.
  static PromptSet load(const std::filesystem::path& dir);

  const Template& get(Stage stage) const;
  void set(Stage stage, Template t);

private:
  std::map<Stage, Template> templates_;
};

/// `[a, b, c] -> [d, e]`, one line per example, in order.
std::string format_examples(std::span<const corpus::Example> examples);

/// Deterministic. Refinement renders the implementor conversation, the
/// previous program as an assistant turn, then the error report.
std::vector<Message> render_prompt(Stage stage, const PromptContext& context,
                                   const PromptSet& set = PromptSet::defaults());

/// Text inside the first <tag>...</tag> pair across the messages.
std::optional<std::string> extract_tagged(std::span<const Message> messages, std::string_view tag);

}  // namespace indukt::prompts
