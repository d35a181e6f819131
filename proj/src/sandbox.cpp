#include "indukt/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <json.hpp>

extern char** environ;

namespace indukt::exec {

using nlohmann::json;

std::string encode_request(const SandboxRequest& r) {
  return json{{"id", r.id}, {"program", r.program}, {"input", r.input}, {"timeout_ms", r.timeout_ms}}
      .dump();
}

SandboxResponse decode_response(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error&) {
    throw ProtocolViolation("protocol violation: response is not JSON");
  }
  if (!j.is_object() || !j.contains("id") || !j["id"].is_number_integer() ||
      !j.contains("status") || !j["status"].is_string()) {
    throw ProtocolViolation("protocol violation: response lacks id or status");
  }
  SandboxResponse r;
  r.id = j["id"].get<std::int64_t>();
  const auto status = j["status"].get<std::string>();
  if (status == "error") {
    r.ok = false;
    r.error = j.contains("error") && j["error"].is_string() ? j["error"].get<std::string>()
                                                           : std::string("error");
    return r;
  }
  if (status != "ok") throw ProtocolViolation("protocol violation: unknown status '" + status + "'");
  const auto it = j.find("output");
  bool flat = it != j.end() && it->is_array();
  if (flat) {
    for (const auto& v : *it) flat = flat && v.is_number_integer();
  }
  if (!flat) {
    r.ok = false;
    r.error = "invalid output shape";
    return r;
  }
  r.ok = true;
  r.output = it->get<List>();
  return r;
}

// ---------------------------------------------------------------------------

SandboxWorker::SandboxWorker(const std::vector<std::string>& command, std::size_t memory_cap_mib) {
  if (command.empty()) throw SandboxUnavailable("no sandbox command configured");

  int in_pipe[2];
  int out_pipe[2];
  int err_pipe[2];  // reports exec failure; closed on successful exec
  if (pipe2(in_pipe, O_CLOEXEC) != 0) throw SandboxUnavailable("pipe failed");
  if (pipe2(out_pipe, O_CLOEXEC) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    throw SandboxUnavailable("pipe failed");
  }
  if (pipe2(err_pipe, O_CLOEXEC) != 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    throw SandboxUnavailable("pipe failed");
  }

  // Everything the child touches is prepared before fork.
  std::vector<std::string> env_storage;
  for (char** e = environ; *e; ++e) env_storage.emplace_back(*e);
  env_storage.push_back("INDUKT_SANDBOX_MEMORY_MIB=" + std::to_string(memory_cap_mib));
  std::vector<char*> envp;
  for (auto& s : env_storage) envp.push_back(s.data());
  envp.push_back(nullptr);
  std::vector<std::string> args_storage = command;
  std::vector<char*> argv;
  for (auto& s : args_storage) argv.push_back(s.data());
  argv.push_back(nullptr);

  const pid_t pid = fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) close(fd);
    throw SandboxUnavailable("fork failed");
  }
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    execvpe(argv[0], argv.data(), envp.data());
    const int err = errno;
    [[maybe_unused]] auto n = write(err_pipe[1], &err, sizeof err);
    _exit(127);
  }

  close(in_pipe[0]);
  close(out_pipe[1]);
  close(err_pipe[1]);
  int child_errno = 0;
  ssize_t n;
  do {
    n = read(err_pipe[0], &child_errno, sizeof child_errno);
  } while (n < 0 && errno == EINTR);
  close(err_pipe[0]);
  if (n > 0) {
    close(in_pipe[1]);
    close(out_pipe[0]);
    waitpid(pid, nullptr, 0);
    throw SandboxUnavailable("cannot start sandbox worker '" + command.front() +
                             "': " + std::strerror(child_errno));
  }
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
}

SandboxWorker::~SandboxWorker() {
  if (pid_ > 0) {
    // Closing stdin asks the worker to exit; kill if it lingers.
    close(to_child_);
    to_child_ = -1;
    for (int i = 0; i < 20; ++i) {
      if (waitpid(pid_, nullptr, WNOHANG) == pid_) {
        pid_ = -1;
        break;
      }
      usleep(5000);
    }
  }
  kill();
}

void SandboxWorker::kill() noexcept {
  if (pid_ > 0) {
    ::kill(pid_, SIGKILL);
    waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
}

std::optional<std::string> SandboxWorker::exchange(const std::string& line,
                                                   std::chrono::milliseconds deadline) {
  if (pid_ <= 0) throw SandboxUnavailable("sandbox worker is not running");
  const std::string payload = line + "\n";
  std::size_t written = 0;
  while (written < payload.size()) {
    const ssize_t n = write(to_child_, payload.data() + written, payload.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      kill();
      throw SandboxUnavailable("sandbox worker closed its input");
    }
    written += static_cast<std::size_t>(n);
  }

  const auto until = std::chrono::steady_clock::now() + deadline;
  for (;;) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string out = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return out;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        until - std::chrono::steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    pollfd pfd{from_child_, POLLIN, 0};
    const int rc = poll(&pfd, 1, static_cast<int>(left.count()));
    if (rc < 0 && errno == EINTR) continue;
    if (rc == 0) return std::nullopt;
    char chunk[4096];
    const ssize_t n = read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      kill();
      throw SandboxUnavailable("sandbox worker exited");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

// ---------------------------------------------------------------------------

SandboxPool::SandboxPool(std::vector<std::string> command, std::size_t width,
                         std::size_t memory_cap_mib)
    : command_(std::move(command)), width_(width == 0 ? 1 : width), memory_cap_mib_(memory_cap_mib) {
  // Writes to a dead worker must fail with EPIPE instead of killing us.
  signal(SIGPIPE, SIG_IGN);
}

std::unique_ptr<SandboxWorker> SandboxPool::acquire() {
  std::unique_lock lock(mutex_);
  available_.wait(lock, [&] { return !idle_.empty() || live_ < width_; });
  if (!idle_.empty()) {
    auto w = std::move(idle_.back());
    idle_.pop_back();
    return w;
  }
  ++live_;
  lock.unlock();
  try {
    return std::make_unique<SandboxWorker>(command_, memory_cap_mib_);
  } catch (...) {
    lock.lock();
    --live_;
    available_.notify_one();
    throw;
  }
}

void SandboxPool::release(std::unique_ptr<SandboxWorker> worker) {
  std::lock_guard lock(mutex_);
  if (worker && worker->alive()) {
    idle_.push_back(std::move(worker));
  } else {
    --live_;
  }
  available_.notify_one();
}

Prediction SandboxPool::run(std::string_view program, std::span<const dsl::Value> input,
                            std::chrono::milliseconds limit) {
  SandboxRequest req;
  {
    std::lock_guard lock(mutex_);
    req.id = next_id_++;
  }
  req.program = std::string(program);
  req.input.assign(input.begin(), input.end());
  req.timeout_ms = limit.count();

  // Backstop for workers that do not enforce timeout_ms themselves.
  const auto deadline = limit + std::max(std::chrono::milliseconds(100), limit / 2);

  auto worker = acquire();
  Prediction result;
  try {
    auto line = worker->exchange(encode_request(req), deadline);
    if (!line) {
      worker->kill();
      result.error = "timeout";
    } else {
      try {
        const auto resp = decode_response(*line);
        if (resp.id != req.id) {
          worker->kill();
          result.error = "protocol violation: response id mismatch";
        } else if (resp.ok) {
          result.output = resp.output;
        } else {
          result.error = resp.error.empty() ? std::string("error") : resp.error;
        }
      } catch (const ProtocolViolation&) {
        worker->kill();
        result.error = "protocol violation";
      }
    }
  } catch (const SandboxUnavailable&) {
    // The worker died mid-request; the candidate is charged, the pool recovers.
    result.error = "sandbox worker crashed";
  }
  release(std::move(worker));
  return result;
}

}  // namespace indukt::exec
