#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "indukt/providers.hpp"

namespace indukt::providers {

using nlohmann::json;

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw std::invalid_argument("endpoint must be an absolute http(s) URL: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

LiveProvider::LiveProvider(LiveConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)) {
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') throw CredentialMissing(config_.api_key_env);
  api_key_ = key;
  if (config_.endpoint.empty()) throw std::invalid_argument("live provider needs an endpoint URL");
  split_endpoint(config_.endpoint);
  if (config_.max_attempts < 1 || config_.requests_per_window < 1) {
    throw std::invalid_argument("live provider limits must be positive");
  }
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

LiveProvider::~LiveProvider() = default;

std::string LiveProvider::describe() const { return "live(" + config_.endpoint + ")"; }

json LiveProvider::request_body(const CompletionRequest& r, int n) {
  json messages = json::array();
  for (const auto& m : r.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  return json{{"model", r.model_name},       {"messages", std::move(messages)},
              {"temperature", r.temperature}, {"top_p", r.top_p},
              {"n", n},                       {"max_tokens", r.max_tokens}};
}

std::vector<std::chrono::steady_clock::time_point> LiveProvider::request_times() const {
  std::lock_guard lock(rate_mutex_);
  return sent_;
}

// Sliding window: at most requests_per_window sends within any rate_window.
void LiveProvider::acquire_slot() {
  for (;;) {
    std::chrono::milliseconds wait{0};
    {
      std::lock_guard lock(rate_mutex_);
      const auto now = std::chrono::steady_clock::now();
      while (!window_.empty() && now - window_.front() >= config_.rate_window) window_.pop_front();
      if (window_.size() < static_cast<std::size_t>(config_.requests_per_window)) {
        window_.push_back(now);
        sent_.push_back(now);
        return;
      }
      wait = std::chrono::duration_cast<std::chrono::milliseconds>(
                 window_.front() + config_.rate_window - now) +
             std::chrono::milliseconds(1);
    }
    std::this_thread::sleep_for(wait);
  }
}

std::vector<std::string> LiveProvider::post(const CompletionRequest& request, int n) {
  const auto [origin, path] = split_endpoint(config_.endpoint);
  const auto body = request_body(request, n).dump();
  std::string last_error;

  for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
    if (attempt > 0) {
      auto delay = config_.backoff_base * (1LL << std::min(attempt - 1, 20));
      sleeper_(std::min<std::chrono::milliseconds>(delay, config_.backoff_cap));
    }
    acquire_slot();

    httplib::Client client(origin);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_bearer_token_auth(api_key_);
    auto res = client.Post(path, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      if (retryable_status(res->status)) continue;
      throw ProviderError("chat completion rejected: " + last_error + ": " + res->body);
    }
    try {
      const auto doc = json::parse(res->body);
      std::vector<std::string> texts;
      for (const auto& choice : doc.at("choices")) {
        const auto& content = choice.at("message").at("content");
        texts.push_back(content.is_null() ? std::string() : content.get<std::string>());
      }
      return texts;
    } catch (const json::exception& e) {
      last_error = std::string("malformed response body: ") + e.what();
    }
  }
  throw ProviderError("chat completion failed after " + std::to_string(config_.max_attempts) +
                      " attempts: " + last_error);
}

std::vector<std::string> LiveProvider::complete(const CompletionRequest& request) {
  std::vector<std::string> out;
  const auto want = static_cast<std::size_t>(request.n_samples);
  while (out.size() < want) {
    const int n = config_.supports_multi_sample ? static_cast<int>(want - out.size()) : 1;
    auto batch = post(request, n);
    if (batch.empty()) throw ProviderError("chat completion returned no choices");
    for (auto& t : batch) {
      if (out.size() < want) out.push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace indukt::providers
