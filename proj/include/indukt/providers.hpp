#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace indukt::providers {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

struct Message {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

/// Which pipeline step issued a request. Part of the request fingerprint.
enum class Stage { Generator, Summarizer, Implementor, Refinement, Direct, Evaluator };

std::string_view to_string(Stage stage);
Stage stage_from_string(std::string_view name);

struct SamplingParams {
  double temperature = 1.0;
  double top_p = 1.0;

  friend bool operator==(const SamplingParams&, const SamplingParams&) = default;
};

/// Per-stage sampling defaults. Parameters are passed to backends verbatim,
/// including the summarizer's top_p of 0.
struct SamplingProfile {
  SamplingParams generator{1.0, 1.0};
  SamplingParams summarizer{1.0, 0.0};
  SamplingParams implementor{0.7, 0.0};
  SamplingParams direct{0.0, 1.0};
  SamplingParams evaluator{0.0, 1.0};
  int max_tokens = 1000;
  std::string model_name = "gpt-4o";

  const SamplingParams& for_stage(Stage stage) const;

  friend bool operator==(const SamplingProfile&, const SamplingProfile&) = default;
};

struct CompletionRequest {
  Stage stage = Stage::Generator;
  std::vector<Message> messages;
  double temperature = 1.0;
  double top_p = 1.0;
  int n_samples = 1;
  int max_tokens = 1000;
  std::string model_name = "gpt-4o";
  /// Names the call site (run/task/trial). Part of the fingerprint so that
  /// replay does not depend on scheduling; never sent to a live endpoint.
  std::string scope;

  friend bool operator==(const CompletionRequest&, const CompletionRequest&) = default;
};

/// Build a request for `stage` using the profile's parameters.
CompletionRequest make_request(Stage stage, std::vector<Message> messages, int n_samples,
                               const SamplingProfile& profile);

/// Canonical form: object keys sorted, fixed field names.
nlohmann::json canonical_json(const CompletionRequest& request);
CompletionRequest request_from_json(const nlohmann::json& j);

/// SHA-256 (hex) of the canonical JSON dump.
std::string fingerprint(const CompletionRequest& request);

/// Transport failure that survived every retry.
class ProviderError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class CredentialMissing : public std::runtime_error {
public:
  explicit CredentialMissing(std::string variable);
  const std::string& variable() const noexcept { return variable_; }

private:
  std::string variable_;
};

/// Replay mode only. Never retried and never swallowed by the pipeline.
class ReplayMiss : public std::runtime_error {
public:
  explicit ReplayMiss(std::string fingerprint, std::string_view detail = "not in transcript");
  const std::string& fingerprint() const noexcept { return fingerprint_; }

private:
  std::string fingerprint_;
};

class Provider {
public:
  virtual ~Provider() = default;

  /// Returns exactly request.n_samples texts. Must be safe to call from
  /// several threads.
  virtual std::vector<std::string> complete(const CompletionRequest& request) = 0;

  /// Short identity of the backend and its settings.
  virtual std::string describe() const = 0;
};

using ProviderPtr = std::shared_ptr<Provider>;

// ---------------------------------------------------------------------------
// Record / replay

struct TranscriptRecord {
  std::string fp;
  nlohmann::json request;
  std::vector<std::string> responses;
};

std::vector<TranscriptRecord> read_transcript(const std::filesystem::path& path);

/// Appends one NDJSON line per request to a shared file.
class TranscriptWriter {
public:
  explicit TranscriptWriter(const std::filesystem::path& path);
  void append(const CompletionRequest& request, const std::vector<std::string>& responses);

private:
  std::mutex mutex_;
  std::ofstream out_;
};

class RecordingProvider final : public Provider {
public:
  RecordingProvider(ProviderPtr inner, std::shared_ptr<TranscriptWriter> writer);
  std::vector<std::string> complete(const CompletionRequest& request) override;
  std::string describe() const override;

private:
  ProviderPtr inner_;
  std::shared_ptr<TranscriptWriter> writer_;
};

/// Serves recorded responses keyed by fingerprint. A fingerprint recorded k
/// times is served k times, in recording order.
class ReplayProvider final : public Provider {
public:
  explicit ReplayProvider(std::vector<TranscriptRecord> records);
  static std::shared_ptr<ReplayProvider> load(const std::filesystem::path& path);

  std::vector<std::string> complete(const CompletionRequest& request) override;
  std::string describe() const override;
  std::size_t remaining() const;

private:
  mutable std::mutex mutex_;
  std::map<std::string, std::deque<std::vector<std::string>>> responses_;
};

// ---------------------------------------------------------------------------
// Scripted

/// Responses come from per-stage handlers. Unhandled stages throw
/// ProviderError. Each call is counted.
class ScriptedProvider final : public Provider {
public:
  using Handler = std::function<std::vector<std::string>(const CompletionRequest&)>;

  ScriptedProvider& on(Stage stage, Handler handler);
  /// Always answer `text` (repeated n_samples times).
  ScriptedProvider& always(Stage stage, std::string text);
  /// Answer successive calls from `texts`; the last entry repeats.
  ScriptedProvider& sequence(Stage stage, std::vector<std::string> texts);
  ScriptedProvider& fail(Stage stage, std::string message = "scripted failure");

  std::vector<std::string> complete(const CompletionRequest& request) override;
  std::string describe() const override { return "scripted"; }

  std::size_t calls(Stage stage) const;
  std::vector<CompletionRequest> requests() const;

private:
  mutable std::mutex mutex_;
  std::map<Stage, Handler> handlers_;
  std::map<Stage, std::size_t> calls_;
  std::vector<CompletionRequest> log_;
};

// ---------------------------------------------------------------------------
// Synthetic

struct SyntheticConfig {
  std::string description;        // ground-truth rule text
  std::string reference_program;  // correct program text
  double p_gen = 1.0;             // generator sample is the true rule
  double p_impl = 1.0;            // program is correct, given the true rule in the prompt
  double p_rescue = 0.0;          // program is correct without the true rule
  double p_retain = 1.0;          // summarizer keeps the true rule when it is present
  double p_direct = 1.0;          // direct-generation program is correct
  std::uint64_t seed = 0;
};

/// Model stand-in driven by the task's ground truth. Each request draws
/// from an RNG seeded by (seed, request fingerprint), so responses do not
/// depend on call order.
class SyntheticProvider final : public Provider {
public:
  explicit SyntheticProvider(SyntheticConfig config);

  std::vector<std::string> complete(const CompletionRequest& request) override;
  std::string describe() const override;

  static const std::vector<std::string>& decoy_hypotheses();
  static const std::vector<std::string>& decoy_programs();

private:
  std::vector<std::string> generator(const CompletionRequest& request, std::uint64_t seed) const;
  std::vector<std::string> summarizer(const CompletionRequest& request, std::uint64_t seed) const;
  std::vector<std::string> programs(const CompletionRequest& request, std::uint64_t seed,
                                    double p_correct) const;
  std::vector<std::string> evaluator(const CompletionRequest& request) const;

  SyntheticConfig config_;
  std::vector<std::string> hypothesis_pool_;
  std::vector<std::string> program_pool_;
};

// ---------------------------------------------------------------------------
// Live HTTP

struct LiveConfig {
  std::string endpoint;  // full URL of the chat-completions endpoint
  std::string api_key_env = "INDUKT_API_KEY";
  bool supports_multi_sample = true;
  int max_attempts = 5;
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds backoff_cap{8000};
  int requests_per_window = 500;
  std::chrono::milliseconds rate_window{60000};
  std::chrono::seconds timeout{120};
};

class LiveProvider final : public Provider {
public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  /// Reads the credential from the configured environment variable.
  /// Throws CredentialMissing when it is unset or empty.
  explicit LiveProvider(LiveConfig config, Sleeper sleeper = {});
  ~LiveProvider() override;

  std::vector<std::string> complete(const CompletionRequest& request) override;
  std::string describe() const override;

  /// Send times of every HTTP request, oldest first.
  std::vector<std::chrono::steady_clock::time_point> request_times() const;

  static nlohmann::json request_body(const CompletionRequest& request, int n);

private:
  std::vector<std::string> post(const CompletionRequest& request, int n);
  void acquire_slot();

  LiveConfig config_;
  std::string api_key_;
  Sleeper sleeper_;
  mutable std::mutex rate_mutex_;
  std::deque<std::chrono::steady_clock::time_point> window_;
  std::vector<std::chrono::steady_clock::time_point> sent_;
};

}  // namespace indukt::providers
