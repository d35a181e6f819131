#include "indukt/pipeline.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "indukt/util.hpp"

namespace indukt::pipeline {

using providers::CompletionRequest;
using providers::ProviderError;
using providers::Stage;

std::string_view to_string(Mode mode) {
  return mode == Mode::HypothesisSearch ? "hypothesis-search" : "direct";
}

Mode mode_from_string(std::string_view name) {
  if (name == "hypothesis-search" || name == "hypothesis_search") return Mode::HypothesisSearch;
  if (name == "direct") return Mode::Direct;
  throw std::invalid_argument("unknown mode '" + std::string(name) + "'");
}

std::string_view to_string(BudgetAccounting a) { return a == BudgetAccounting::Paper ? "paper" : "strict"; }

BudgetAccounting accounting_from_string(std::string_view name) {
  if (name == "paper") return BudgetAccounting::Paper;
  if (name == "strict") return BudgetAccounting::Strict;
  throw std::invalid_argument("unknown budget accounting '" + std::string(name) + "'");
}

int max_calls(BudgetAccounting accounting) {
  const int refinements = kSummaries * kCandidatesPerHypothesis * kMaxRefinementRounds;
  const int batches = accounting == BudgetAccounting::Strict ? kSummaries : 0;
  return kGeneratorSamples + 1 + batches + refinements;
}

const ProgramVersion& CandidateProgram::best() const {
  if (versions.empty()) throw std::logic_error("candidate has no versions");
  const ProgramVersion* best = &versions.front();
  for (const auto& v : versions) {
    if (v.report.train_accuracy() >= best->report.train_accuracy()) best = &v;
  }
  return *best;
}

bool CandidateProgram::passed() const {
  return std::any_of(versions.begin(), versions.end(),
                     [](const ProgramVersion& v) { return v.report.all_passed; });
}

namespace {

CompletionRequest request_for(Stage stage, std::vector<providers::Message> messages, int n,
                              const PipelineConfig& config, std::string scope) {
  auto req = providers::make_request(stage, std::move(messages), n, config.profile);
  req.scope = std::move(scope);
  return req;
}

VersionReport evaluate_version(const std::string& text, const corpus::TrialSpec& trial,
                               const exec::Executor& executor) {
  VersionReport v;
  if (trial.training.empty()) {
    // Nothing to check against: a version cannot pass, only fail to compile.
    if (auto diag = executor.check(text)) {
      v.feedback = "The program is not valid: " + *diag;
    } else {
      v.feedback = exec::refinement_feedback(exec::ExecutionReport{});
    }
    return v;
  }
  const auto report = executor.run_candidate(text, trial.training);
  v.matches = report.matches;
  v.total = report.total();
  v.all_passed = report.all_passed;
  for (const auto& r : report.results) v.statuses.push_back(r.status);
  if (!report.all_passed) v.feedback = exec::refinement_feedback(report);
  return v;
}

prompts::PromptContext implementor_context(const Hypothesis& h, const corpus::TrialSpec& trial) {
  prompts::PromptContext ctx;
  ctx.hypothesis = h.text;
  ctx.examples = trial.training;
  return ctx;
}

}  // namespace

std::vector<Hypothesis> generate_hypotheses(const corpus::TrialSpec& trial,
                                            providers::Provider& provider,
                                            const PipelineConfig& config,
                                            const TrialContext& context, TrialState& state) {
  prompts::PromptContext ctx;
  ctx.examples = trial.training;
  const auto messages = prompts::render_prompt(Stage::Generator, ctx, config.prompt_set());

  std::vector<std::string> texts;
  if (config.generator_multi_sample) {
    texts = provider.complete(
        request_for(Stage::Generator, messages, kGeneratorSamples, config, context.scope + "/generator"));
  } else {
    for (int k = 1; k <= kGeneratorSamples; ++k) {
      auto one = provider.complete(request_for(Stage::Generator, messages, 1, config,
                                               context.scope + "/generator#" + std::to_string(k)));
      texts.push_back(one.empty() ? std::string() : std::move(one.front()));
    }
  }
  state.ledger.generator_calls += kGeneratorSamples;

  std::vector<Hypothesis> out;
  for (int k = 0; k < kGeneratorSamples; ++k) {
    Hypothesis h;
    h.source = Hypothesis::Source::Generator;
    h.index = k + 1;
    h.text = k < static_cast<int>(texts.size()) ? trim(texts[static_cast<std::size_t>(k)]) : "";
    if (h.text.empty()) {
      h.text = std::string(kNoHypothesis);
      state.events.push_back("generator sample " + std::to_string(k + 1) + " empty");
    }
    out.push_back(std::move(h));
  }
  return out;
}

std::vector<std::string> parse_summaries(std::string_view response) {
  std::vector<std::string> out;
  std::istringstream in{std::string(response)};
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    // Tolerate markdown emphasis around the number.
    while (!t.empty() && (t.front() == '*' || t.front() == '#')) t.erase(0, 1);
    std::size_t i = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    if (i == 0 || i >= t.size() || (t[i] != '.' && t[i] != ')')) continue;
    auto text = trim(std::string_view(t).substr(i + 1));
    while (!text.empty() && text.front() == '*') text.erase(0, 1);
    while (!text.empty() && text.back() == '*') text.pop_back();
    text = trim(text);
    if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
      text = text.substr(1, text.size() - 2);
    }
    if (!text.empty()) out.push_back(std::move(text));
  }
  return out;
}

std::vector<Hypothesis> summarize(const std::vector<Hypothesis>& generated,
                                  providers::Provider& provider, const PipelineConfig& config,
                                  const TrialContext& context, TrialState& state) {
  std::vector<std::string> inputs;
  for (const auto& h : generated) inputs.push_back(h.text);
  while (inputs.size() < static_cast<std::size_t>(kGeneratorSamples)) {
    inputs.emplace_back(kNoHypothesis);
  }

  prompts::PromptContext ctx;
  ctx.hypotheses = inputs;
  const auto messages = prompts::render_prompt(Stage::Summarizer, ctx, config.prompt_set());
  const auto response =
      provider.complete(request_for(Stage::Summarizer, messages, 1, config, context.scope + "/summarizer"));
  state.ledger.summarizer_calls += 1;

  auto texts = parse_summaries(response.empty() ? std::string_view{} : std::string_view(response.front()));
  std::vector<Hypothesis> out;

  if (texts.empty()) {
    // Fallback: the most frequent generator hypotheses, ties by first index.
    state.events.push_back("summarizer response unparseable; using top generator hypotheses");
    std::vector<std::pair<std::string, std::vector<int>>> groups;
    for (const auto& h : generated) {
      const auto key = normalize_text(h.text);
      auto it = std::find_if(groups.begin(), groups.end(),
                             [&](const auto& g) { return normalize_text(g.first) == key; });
      if (it == groups.end()) {
        groups.push_back({h.text, {h.index}});
      } else {
        it->second.push_back(h.index);
      }
    }
    std::stable_sort(groups.begin(), groups.end(),
                     [](const auto& a, const auto& b) { return a.second.size() > b.second.size(); });
    for (auto& [text, parents] : groups) {
      if (out.size() == static_cast<std::size_t>(kSummaries)) break;
      Hypothesis h{text, Hypothesis::Source::Summarizer, static_cast<int>(out.size()) + 1, parents};
      out.push_back(std::move(h));
    }
    return out;
  }

  if (texts.size() > static_cast<std::size_t>(kSummaries)) {
    state.events.push_back("summarizer returned " + std::to_string(texts.size()) +
                           " summaries; keeping the first " + std::to_string(kSummaries));
    texts.resize(kSummaries);
  } else if (texts.size() < static_cast<std::size_t>(kSummaries)) {
    state.events.push_back("summarizer shortfall: " + std::to_string(texts.size()) + " of " +
                           std::to_string(kSummaries) + " summaries");
  }
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out.push_back({texts[i], Hypothesis::Source::Summarizer, static_cast<int>(i) + 1, {}});
  }
  return out;
}

std::string extract_program(std::string_view response, const exec::Executor& executor) {
  const auto open = response.find("```");
  if (open != std::string_view::npos) {
    auto body_start = response.find('\n', open + 3);
    if (body_start != std::string_view::npos) {
      ++body_start;
      const auto close = response.find("```", body_start);
      if (close != std::string_view::npos) {
        return trim(response.substr(body_start, close - body_start));
      }
    }
  }
  std::string best;
  std::istringstream in{std::string(response)};
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.size() > best.size() && executor.parses(t)) best = std::move(t);
  }
  if (!best.empty()) return best;
  return trim(response);
}

Implementation implement(const Hypothesis& hypothesis, int slot, const corpus::TrialSpec& trial,
                         providers::Provider& provider, const exec::Executor& executor,
                         const PipelineConfig& config, const TrialContext& context,
                         TrialState& state) {
  Implementation result;
  const auto ctx = implementor_context(hypothesis, trial);
  const auto scope = context.scope + "/s" + std::to_string(slot);

  std::vector<std::string> initial;
  try {
    initial = provider.complete(request_for(
        Stage::Implementor, prompts::render_prompt(Stage::Implementor, ctx, config.prompt_set()),
        kCandidatesPerHypothesis, config, scope));
  } catch (const ProviderError& e) {
    state.events.push_back("implementor batch for slot " + std::to_string(slot) +
                           " failed: " + e.what());
    return result;
  }
  if (config.accounting == BudgetAccounting::Strict) state.ledger.implementor_calls += 1;

  for (int c = 1; c <= kCandidatesPerHypothesis; ++c) {
    CandidateProgram cand;
    cand.hypothesis_slot = slot;
    cand.candidate_index = c;

    const auto& raw = static_cast<std::size_t>(c - 1) < initial.size()
                          ? initial[static_cast<std::size_t>(c - 1)]
                          : std::string();
    ProgramVersion v{extract_program(raw, executor), 0, {}};
    v.report = evaluate_version(v.text, trial, executor);
    ++state.ledger.program_versions;
    cand.versions.push_back(std::move(v));

    for (int round = 1; round <= kMaxRefinementRounds && !cand.versions.back().report.all_passed;
         ++round) {
      auto refine_ctx = ctx;
      refine_ctx.program = cand.versions.back().text;
      refine_ctx.error = cand.versions.back().report.feedback;
      std::vector<std::string> reply;
      try {
        reply = provider.complete(request_for(
            Stage::Refinement,
            prompts::render_prompt(Stage::Refinement, refine_ctx, config.prompt_set()), 1, config,
            scope + "c" + std::to_string(c) + "r" + std::to_string(round)));
      } catch (const ProviderError& e) {
        state.events.push_back("refinement of slot " + std::to_string(slot) + " candidate " +
                               std::to_string(c) + " failed: " + e.what());
        cand.frozen = true;
        break;
      }
      ++state.ledger.implementor_calls;
      ProgramVersion next{extract_program(reply.empty() ? std::string_view{} : reply.front(), executor),
                          round, {}};
      next.report = evaluate_version(next.text, trial, executor);
      ++state.ledger.program_versions;
      cand.versions.push_back(std::move(next));
    }

    const bool passed = cand.versions.back().report.all_passed;
    result.candidates.push_back(std::move(cand));
    if (passed) {
      result.solved = true;
      break;
    }
  }
  return result;
}

std::vector<SelectedProgram> select_tied(const std::vector<CandidateProgram>& candidates,
                                         const exec::Executor& executor) {
  std::vector<SelectedProgram> out;
  if (candidates.empty()) return out;
  double best = 0.0;
  for (const auto& c : candidates) best = std::max(best, c.final_train_accuracy());
  std::set<std::string> seen;
  for (const auto& c : candidates) {
    if (c.final_train_accuracy() != best) continue;
    const auto& v = c.best();
    if (!seen.insert(executor.canonical(v.text)).second) continue;
    SelectedProgram s;
    s.text = v.text;
    s.train_accuracy = best;
    out.push_back(std::move(s));
  }
  return out;
}

void score_selection(TrialOutcome& outcome, const corpus::Example& test,
                     const exec::Executor& executor) {
  std::size_t correct = 0;
  for (auto& s : outcome.selected) {
    auto p = executor.predict(s.text, test.input);
    if (p.ok()) {
      s.test_correct = *p.output == test.output;
      s.test_output = std::move(p.output);
    } else {
      s.test_correct = false;
      s.test_error = p.error;
    }
    correct += s.test_correct ? 1 : 0;
  }
  outcome.test_accuracy = outcome.selected.empty()
                              ? 0.0
                              : static_cast<double>(correct) / static_cast<double>(outcome.selected.size());
  outcome.test_solved_any = correct > 0;
}

namespace {

TrialOutcome start_outcome(const corpus::TrialSpec& trial, Mode mode, const TrialContext& context) {
  TrialOutcome o;
  o.task_id = trial.task_id;
  o.run_id = context.run_id;
  o.trial_index = trial.trial_index;
  o.mode = mode;
  return o;
}

void finish(TrialOutcome& o, TrialState& state, std::chrono::steady_clock::time_point started) {
  o.ledger = state.ledger;
  o.ledger.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(
      std::chrono::steady_clock::now() - started);
  o.events = std::move(state.events);
}

}  // namespace

TrialOutcome run_trial_hypothesis_search(const corpus::TrialSpec& trial,
                                         providers::Provider& provider,
                                         const exec::Executor& executor,
                                         const PipelineConfig& config,
                                         const TrialContext& context) {
  const auto started = std::chrono::steady_clock::now();
  auto outcome = start_outcome(trial, Mode::HypothesisSearch, context);
  TrialState state;

  try {
    outcome.generated = generate_hypotheses(trial, provider, config, context, state);
    outcome.summaries = summarize(outcome.generated, provider, config, context, state);
  } catch (const ProviderError& e) {
    outcome.infrastructure_failure = e.what();
    finish(outcome, state, started);
    return outcome;
  }

  std::set<std::string> implemented;
  for (const auto& h : outcome.summaries) {
    if (h.text == kNoHypothesis) {
      state.events.push_back("summary slot " + std::to_string(h.index) + " empty; skipped");
      continue;
    }
    if (!implemented.insert(normalize_text(h.text)).second) {
      state.events.push_back("summary slot " + std::to_string(h.index) + " duplicates an earlier slot; skipped");
      continue;
    }
    auto impl = implement(h, h.index, trial, provider, executor, config, context, state);
    for (auto& c : impl.candidates) outcome.candidates.push_back(std::move(c));
    if (impl.solved) break;
  }

  outcome.train_solved = std::any_of(outcome.candidates.begin(), outcome.candidates.end(),
                                     [](const CandidateProgram& c) { return c.passed(); });
  if (trial.training.empty() || outcome.candidates.empty()) {
    if (!trial.training.empty()) state.events.push_back("no candidate programs; using identity");
    outcome.used_fallback = true;
    outcome.selected = {SelectedProgram{std::string(kFallbackProgram), 0.0, false, std::nullopt, {}}};
  } else {
    outcome.selected = select_tied(outcome.candidates, executor);
  }
  score_selection(outcome, trial.test, executor);
  finish(outcome, state, started);
  return outcome;
}

TrialOutcome run_trial_direct(const corpus::TrialSpec& trial, providers::Provider& provider,
                              const exec::Executor& executor, const PipelineConfig& config,
                              const TrialContext& context) {
  const auto started = std::chrono::steady_clock::now();
  auto outcome = start_outcome(trial, Mode::Direct, context);
  TrialState state;

  prompts::PromptContext ctx;
  ctx.examples = trial.training;
  std::vector<std::string> reply;
  try {
    reply = provider.complete(request_for(Stage::Direct,
                                          prompts::render_prompt(Stage::Direct, ctx, config.prompt_set()),
                                          1, config, context.scope + "/direct"));
  } catch (const ProviderError& e) {
    outcome.infrastructure_failure = e.what();
    finish(outcome, state, started);
    return outcome;
  }
  state.ledger.implementor_calls = 1;

  CandidateProgram cand;
  cand.hypothesis_slot = 0;
  cand.candidate_index = 1;
  ProgramVersion v{extract_program(reply.empty() ? std::string_view{} : reply.front(), executor), 0, {}};
  v.report = evaluate_version(v.text, trial, executor);
  state.ledger.program_versions = 1;
  cand.versions.push_back(std::move(v));
  outcome.train_solved = cand.passed();
  outcome.selected = {SelectedProgram{cand.versions.front().text, cand.final_train_accuracy(), false,
                                      std::nullopt, {}}};
  outcome.candidates.push_back(std::move(cand));
  score_selection(outcome, trial.test, executor);
  finish(outcome, state, started);
  return outcome;
}

TrialOutcome run_trial(Mode mode, const corpus::TrialSpec& trial, providers::Provider& provider,
                       const exec::Executor& executor, const PipelineConfig& config,
                       const TrialContext& context) {
  return mode == Mode::HypothesisSearch
             ? run_trial_hypothesis_search(trial, provider, executor, config, context)
             : run_trial_direct(trial, provider, executor, config, context);
}

}  // namespace indukt::pipeline
