#include "indukt/providers.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "indukt/dsl.hpp"
#include "indukt/prompts.hpp"
#include "indukt/util.hpp"

namespace indukt::providers {

using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System:
      return "system";
    case Role::User:
      return "user";
    case Role::Assistant:
      return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view name) {
  if (name == "system") return Role::System;
  if (name == "user") return Role::User;
  if (name == "assistant") return Role::Assistant;
  throw std::invalid_argument("unknown role '" + std::string(name) + "'");
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Generator:
      return "generator";
    case Stage::Summarizer:
      return "summarizer";
    case Stage::Implementor:
      return "implementor";
    case Stage::Refinement:
      return "refinement";
    case Stage::Direct:
      return "direct";
    case Stage::Evaluator:
      return "evaluator";
  }
  return "generator";
}

Stage stage_from_string(std::string_view name) {
  for (auto s : {Stage::Generator, Stage::Summarizer, Stage::Implementor, Stage::Refinement,
                 Stage::Direct, Stage::Evaluator}) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown stage '" + std::string(name) + "'");
}

const SamplingParams& SamplingProfile::for_stage(Stage stage) const {
  switch (stage) {
    case Stage::Generator:
      return generator;
    case Stage::Summarizer:
      return summarizer;
    case Stage::Implementor:
    case Stage::Refinement:
      return implementor;
    case Stage::Direct:
      return direct;
    case Stage::Evaluator:
      return evaluator;
  }
  return generator;
}

CompletionRequest make_request(Stage stage, std::vector<Message> messages, int n_samples,
                               const SamplingProfile& profile) {
  const auto& params = profile.for_stage(stage);
  CompletionRequest req;
  req.stage = stage;
  req.messages = std::move(messages);
  req.temperature = params.temperature;
  req.top_p = params.top_p;
  req.n_samples = n_samples;
  req.max_tokens = profile.max_tokens;
  req.model_name = profile.model_name;
  return req;
}

json canonical_json(const CompletionRequest& r) {
  json messages = json::array();
  for (const auto& m : r.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  json j{{"stage", to_string(r.stage)},  {"model", r.model_name},
         {"messages", std::move(messages)}, {"temperature", r.temperature},
         {"top_p", r.top_p},                {"n", r.n_samples},
         {"max_tokens", r.max_tokens}};
  if (!r.scope.empty()) j["scope"] = r.scope;
  return j;
}

CompletionRequest request_from_json(const json& j) {
  CompletionRequest r;
  r.stage = stage_from_string(j.at("stage").get<std::string>());
  r.model_name = j.at("model").get<std::string>();
  for (const auto& m : j.at("messages")) {
    r.messages.push_back({role_from_string(m.at("role").get<std::string>()),
                          m.at("content").get<std::string>()});
  }
  r.temperature = j.at("temperature").get<double>();
  r.top_p = j.at("top_p").get<double>();
  r.n_samples = j.at("n").get<int>();
  r.max_tokens = j.at("max_tokens").get<int>();
  if (auto it = j.find("scope"); it != j.end()) r.scope = it->get<std::string>();
  return r;
}

std::string fingerprint(const CompletionRequest& request) {
  return sha256_hex(canonical_json(request).dump());
}

CredentialMissing::CredentialMissing(std::string variable)
    : std::runtime_error("credential missing: environment variable " + variable + " is not set"),
      variable_(std::move(variable)) {}

ReplayMiss::ReplayMiss(std::string fp, std::string_view detail)
    : std::runtime_error("replay miss for request " + fp + ": " + std::string(detail)),
      fingerprint_(std::move(fp)) {}

// ---------------------------------------------------------------------------
// Record / replay

std::vector<TranscriptRecord> read_transcript(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read transcript " + path.string());
  std::vector<TranscriptRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = json::parse(line);
      records.push_back({j.at("fp").get<std::string>(), j.at("req"),
                         j.at("resp").get<std::vector<std::string>>()});
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": malformed transcript record: " + e.what());
    }
  }
  return records;
}

TranscriptWriter::TranscriptWriter(const std::filesystem::path& path)
    : out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot write transcript " + path.string());
}

void TranscriptWriter::append(const CompletionRequest& request,
                              const std::vector<std::string>& responses) {
  auto req = canonical_json(request);
  json record{{"fp", sha256_hex(req.dump())}, {"req", std::move(req)}, {"resp", responses}};
  const auto line = record.dump();
  std::lock_guard lock(mutex_);
  out_ << line << '\n';
  out_.flush();
}

RecordingProvider::RecordingProvider(ProviderPtr inner, std::shared_ptr<TranscriptWriter> writer)
    : inner_(std::move(inner)), writer_(std::move(writer)) {}

std::vector<std::string> RecordingProvider::complete(const CompletionRequest& request) {
  auto responses = inner_->complete(request);
  writer_->append(request, responses);
  return responses;
}

std::string RecordingProvider::describe() const { return inner_->describe(); }

ReplayProvider::ReplayProvider(std::vector<TranscriptRecord> records) {
  for (auto& r : records) responses_[r.fp].push_back(std::move(r.responses));
}

std::shared_ptr<ReplayProvider> ReplayProvider::load(const std::filesystem::path& path) {
  return std::make_shared<ReplayProvider>(read_transcript(path));
}

std::vector<std::string> ReplayProvider::complete(const CompletionRequest& request) {
  const auto fp = fingerprint(request);
  std::lock_guard lock(mutex_);
  auto it = responses_.find(fp);
  if (it == responses_.end()) throw ReplayMiss(fp);
  if (it->second.empty()) throw ReplayMiss(fp, "recorded responses exhausted");
  auto out = std::move(it->second.front());
  it->second.pop_front();
  if (out.size() != static_cast<std::size_t>(request.n_samples)) {
    throw ReplayMiss(fp, "recorded sample count differs from request");
  }
  return out;
}

std::string ReplayProvider::describe() const { return "replay"; }

std::size_t ReplayProvider::remaining() const {
  std::lock_guard lock(mutex_);
  std::size_t n = 0;
  for (const auto& [_, q] : responses_) n += q.size();
  return n;
}

// ---------------------------------------------------------------------------
// Scripted

ScriptedProvider& ScriptedProvider::on(Stage stage, Handler handler) {
  std::lock_guard lock(mutex_);
  handlers_[stage] = std::move(handler);
  return *this;
}

ScriptedProvider& ScriptedProvider::always(Stage stage, std::string text) {
  return on(stage, [text = std::move(text)](const CompletionRequest& r) {
    return std::vector<std::string>(static_cast<std::size_t>(r.n_samples), text);
  });
}

ScriptedProvider& ScriptedProvider::sequence(Stage stage, std::vector<std::string> texts) {
  if (texts.empty()) throw std::invalid_argument("sequence needs at least one response");
  auto next = std::make_shared<std::size_t>(0);
  return on(stage, [texts = std::move(texts), next](const CompletionRequest& r) {
    std::vector<std::string> out;
    for (int i = 0; i < r.n_samples; ++i) {
      out.push_back(texts[std::min(*next, texts.size() - 1)]);
      ++*next;
    }
    return out;
  });
}

ScriptedProvider& ScriptedProvider::fail(Stage stage, std::string message) {
  return on(stage, [message = std::move(message)](const CompletionRequest&) -> std::vector<std::string> {
    throw ProviderError(message);
  });
}

std::vector<std::string> ScriptedProvider::complete(const CompletionRequest& request) {
  // Handlers run under the lock so stateful sequences stay ordered.
  std::lock_guard lock(mutex_);
  ++calls_[request.stage];
  log_.push_back(request);
  auto it = handlers_.find(request.stage);
  if (it == handlers_.end()) {
    throw ProviderError("no scripted response for stage " + std::string(to_string(request.stage)));
  }
  auto out = it->second(request);
  if (out.size() != static_cast<std::size_t>(request.n_samples)) {
    throw ProviderError("scripted handler returned the wrong number of samples");
  }
  return out;
}

std::size_t ScriptedProvider::calls(Stage stage) const {
  std::lock_guard lock(mutex_);
  auto it = calls_.find(stage);
  return it == calls_.end() ? 0 : it->second;
}

std::vector<CompletionRequest> ScriptedProvider::requests() const {
  std::lock_guard lock(mutex_);
  return log_;
}

// ---------------------------------------------------------------------------
// Synthetic

namespace {

class Draw {
public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }

private:
  std::mt19937_64 rng_;
};

std::string fenced(const std::string& program) { return "```\n" + program + "\n```"; }

std::string canonical_program(const std::string& text) {
  try {
    return dsl::pretty(dsl::parse(text));
  } catch (const dsl::ParseError&) {
    return trim(text);
  }
}

// Lines of the form "<n>. text" or "<n>) text".
std::vector<std::string> numbered_lines(std::string_view block) {
  std::vector<std::string> out;
  std::istringstream in{std::string(block)};
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    std::size_t i = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    if (i == 0 || i >= t.size() || (t[i] != '.' && t[i] != ')')) continue;
    out.push_back(trim(std::string_view(t).substr(i + 1)));
  }
  return out;
}

}  // namespace

const std::vector<std::string>& SyntheticProvider::decoy_hypotheses() {
  static const std::vector<std::string> pool{
      "Reverse the order of the elements.",
      "Sort the elements in ascending order.",
      "Keep only the first element.",
      "Remove the last element.",
      "Add 1 to every element.",
      "Double every element.",
      "Keep only the odd elements.",
      "Output the sum of the elements.",
      "Remove duplicate elements.",
      "Move the last element to the front.",
      "Repeat the list twice.",
      "Keep the elements greater than 5.",
      "Output the largest element.",
      "Drop the first element.",
      "Replace every 1 with 0.",
      "Output the list unchanged.",
  };
  return pool;
}

const std::vector<std::string>& SyntheticProvider::decoy_programs() {
  static const std::vector<std::string> pool{
      "identity",     "sort",       "reverse",    "head",        "init",
      "add 1",        "mul 2",      "filter_odd", "sum",         "unique",
      "rotate_right 1", "concat_self", "filter_gt 5", "max",      "tail",
      "replace 1 0",
  };
  return pool;
}

SyntheticProvider::SyntheticProvider(SyntheticConfig config) : config_(std::move(config)) {
  const auto truth = normalize_text(config_.description);
  for (const auto& h : decoy_hypotheses())
    if (normalize_text(h) != truth) hypothesis_pool_.push_back(h);
  const auto reference = canonical_program(config_.reference_program);
  for (const auto& p : decoy_programs())
    if (canonical_program(p) != reference) program_pool_.push_back(p);
}

std::string SyntheticProvider::describe() const {
  std::ostringstream out;
  out << "synthetic(p_gen=" << config_.p_gen << ",p_impl=" << config_.p_impl
      << ",p_rescue=" << config_.p_rescue << ",p_retain=" << config_.p_retain
      << ",p_direct=" << config_.p_direct << ")";
  return out.str();
}

std::vector<std::string> SyntheticProvider::complete(const CompletionRequest& request) {
  const std::uint64_t seed = combine_seed(config_.seed, digest_prefix(fingerprint(request)));
  switch (request.stage) {
    case Stage::Generator:
      return generator(request, seed);
    case Stage::Summarizer:
      return summarizer(request, seed);
    case Stage::Implementor:
    case Stage::Refinement: {
      const auto hyp = prompts::extract_tagged(request.messages, "hypothesis");
      const bool true_rule =
          hyp && normalize_text(*hyp) == normalize_text(config_.description);
      return programs(request, seed, true_rule ? config_.p_impl : config_.p_rescue);
    }
    case Stage::Direct:
      return programs(request, seed, config_.p_direct);
    case Stage::Evaluator:
      return evaluator(request);
  }
  throw ProviderError("synthetic provider: unsupported stage");
}

std::vector<std::string> SyntheticProvider::generator(const CompletionRequest& request,
                                                      std::uint64_t seed) const {
  Draw draw(seed);
  std::vector<std::string> out;
  for (int i = 0; i < request.n_samples; ++i) {
    if (draw.uniform() < config_.p_gen) {
      out.push_back(config_.description);
    } else {
      out.push_back(hypothesis_pool_[draw.index(hypothesis_pool_.size())]);
    }
  }
  return out;
}

std::vector<std::string> SyntheticProvider::summarizer(const CompletionRequest& request,
                                                       std::uint64_t seed) const {
  Draw draw(seed);
  const auto block = prompts::extract_tagged(request.messages, "hypotheses");
  const auto inputs = block ? numbered_lines(*block) : std::vector<std::string>{};

  // Distinct inputs ranked by frequency, then first appearance.
  struct Entry {
    std::string text;
    std::string key;
    std::size_t count;
    std::size_t first;
  };
  std::vector<Entry> ranked;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto key = normalize_text(inputs[i]);
    auto it = std::find_if(ranked.begin(), ranked.end(), [&](const Entry& e) { return e.key == key; });
    if (it == ranked.end()) {
      ranked.push_back({inputs[i], key, 1, i});
    } else {
      ++it->count;
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Entry& a, const Entry& b) { return a.count > b.count; });

  const auto truth = normalize_text(config_.description);
  auto truth_it = std::find_if(ranked.begin(), ranked.end(), [&](const Entry& e) { return e.key == truth; });
  if (truth_it != ranked.end()) {
    Entry kept = *truth_it;
    ranked.erase(truth_it);
    if (draw.uniform() < config_.p_retain) ranked.insert(ranked.begin(), std::move(kept));
  }

  std::vector<std::string> texts;
  for (const auto& e : ranked) {
    if (texts.size() == static_cast<std::size_t>(prompts::kSummaryCount)) break;
    texts.push_back(e.text);
  }
  if (texts.empty()) {
    std::vector<std::string> out(static_cast<std::size_t>(request.n_samples),
                                 "I could not find any hypotheses to summarize.");
    return out;
  }
  for (std::size_t i = 0; texts.size() < static_cast<std::size_t>(prompts::kSummaryCount); ++i) {
    texts.push_back(texts[i % texts.size()]);
  }
  std::string reply;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    reply += std::to_string(i + 1) + ". " + texts[i] + "\n";
  }
  return std::vector<std::string>(static_cast<std::size_t>(request.n_samples), reply);
}

std::vector<std::string> SyntheticProvider::programs(const CompletionRequest& request,
                                                     std::uint64_t seed, double p_correct) const {
  Draw draw(seed);
  std::vector<std::string> out;
  for (int i = 0; i < request.n_samples; ++i) {
    if (draw.uniform() < p_correct) {
      out.push_back(fenced(config_.reference_program));
    } else {
      out.push_back(fenced(program_pool_[draw.index(program_pool_.size())]));
    }
  }
  return out;
}

std::vector<std::string> SyntheticProvider::evaluator(const CompletionRequest& request) const {
  const auto hyp = prompts::extract_tagged(request.messages, "hypothesis");
  const auto truth = prompts::extract_tagged(request.messages, "ground_truth");
  const bool same = hyp && truth && normalize_text(*hyp) == normalize_text(*truth);
  return std::vector<std::string>(static_cast<std::size_t>(request.n_samples),
                                  same ? "CORRECT" : "INCORRECT");
}

}  // namespace indukt::providers
