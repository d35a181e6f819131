#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "indukt/executor.hpp"

namespace indukt::exec {

// Wire protocol, one JSON object per line over the worker's stdio:
//   request  {"id": int, "program": str, "input": [int...], "timeout_ms": int}
//   response {"id": int, "status": "ok"|"error", "output": [int...] | "error": str}

struct SandboxRequest {
  std::int64_t id = 0;
  std::string program;
  List input;
  std::int64_t timeout_ms = 2000;
};

struct SandboxResponse {
  std::int64_t id = 0;
  bool ok = false;
  List output;
  std::string error;
};

class ProtocolViolation : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::string encode_request(const SandboxRequest& request);

/// Throws ProtocolViolation for non-JSON or structurally wrong lines. An ok
/// response whose output is not a flat integer list decodes as an error
/// response with message "invalid output shape".
SandboxResponse decode_response(std::string_view line);

/// One worker process with pipes to its stdin and stdout.
class SandboxWorker {
public:
  SandboxWorker(const std::vector<std::string>& command, std::size_t memory_cap_mib);
  ~SandboxWorker();
  SandboxWorker(const SandboxWorker&) = delete;
  SandboxWorker& operator=(const SandboxWorker&) = delete;

  /// Sends one request and waits up to `deadline` for the response line.
  /// Returns nullopt on timeout; throws SandboxUnavailable if the worker died.
  std::optional<std::string> exchange(const std::string& line, std::chrono::milliseconds deadline);

  void kill() noexcept;
  bool alive() const noexcept { return pid_ > 0; }

private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

class SandboxPool {
public:
  SandboxPool(std::vector<std::string> command, std::size_t width, std::size_t memory_cap_mib);

  /// Runs one program on one input. Worker-level failures (timeout, crash,
  /// protocol violation) are reported as errors and the worker is replaced.
  Prediction run(std::string_view program, std::span<const dsl::Value> input,
                 std::chrono::milliseconds limit);

private:
  std::unique_ptr<SandboxWorker> acquire();
  void release(std::unique_ptr<SandboxWorker> worker);

  std::vector<std::string> command_;
  std::size_t width_;
  std::size_t memory_cap_mib_;
  std::mutex mutex_;
  std::condition_variable available_;
  std::vector<std::unique_ptr<SandboxWorker>> idle_;
  std::size_t live_ = 0;
  std::int64_t next_id_ = 1;
};

}  // namespace indukt::exec
