#include "indukt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "indukt/pipeline.hpp"
#include "indukt/util.hpp"

namespace indukt::analysis {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Judging

std::string_view to_string(JudgeMode mode) {
  switch (mode) {
    case JudgeMode::Exact:
      return "exact";
    case JudgeMode::Normalized:
      return "normalized";
    case JudgeMode::Provider:
      return "provider";
  }
  return "exact";
}

std::optional<bool> parse_verdict(std::string_view reply) {
  std::string upper(reply);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper.find("INCORRECT") != std::string::npos) return false;
  if (upper.find("CORRECT") != std::string::npos) return true;
  return std::nullopt;
}

Judge::Judge(JudgeConfig config) : config_(std::move(config)) {
  if (config_.mode == JudgeMode::Provider && !config_.provider) {
    throw std::invalid_argument("provider judge needs a provider");
  }
}

Judgement Judge::judge(const std::string& hypothesis, const std::string& ground_truth,
                       const std::string& scope) {
  if (trim(ground_truth).empty()) throw std::invalid_argument("ground truth must be non-empty");
  const auto text = trim(hypothesis);
  if (text.empty() || text == pipeline::kNoHypothesis) return {false, false, {}};
  if (config_.exact_shortcut && text == trim(ground_truth)) return {true, false, {}};
  if (config_.mode == JudgeMode::Exact) return {text == trim(ground_truth), false, {}};
  if (config_.mode == JudgeMode::Normalized) {
    return {normalize_text(text) == normalize_text(ground_truth), false, {}};
  }

  const auto key = std::make_pair(text, ground_truth);
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;

  prompts::PromptContext ctx;
  ctx.hypothesis = text;
  ctx.ground_truth = ground_truth;
  const auto& set = config_.prompts ? *config_.prompts : prompts::PromptSet::defaults();
  auto request = providers::make_request(providers::Stage::Evaluator,
                                         prompts::render_prompt(providers::Stage::Evaluator, ctx, set),
                                         1, config_.profile);
  request.scope = scope;

  Judgement j;
  j.called = true;
  ++calls_;
  try {
    const auto reply = config_.provider->complete(request);
    j.verdict = parse_verdict(reply.empty() ? std::string_view{} : std::string_view(reply.front()));
    if (!j.verdict) {
      j.verdict = false;
      j.degradation = "unparseable evaluator reply";
    }
  } catch (const providers::ProviderError& e) {
    j.verdict.reset();
    j.degradation = std::string("evaluator failed: ") + e.what();
    return j;  // not memoized: a later call may succeed
  }
  memo_.emplace(key, j);
  return j;
}

std::vector<ModuleVerdicts> judge_logs(std::span<const RunLog> logs, const corpus::Corpus& corpus,
                                       Judge& judge) {
  std::vector<ModuleVerdicts> out;
  for (const auto& log : logs) {
    if (log.header.mode != pipeline::Mode::HypothesisSearch) {
      throw std::invalid_argument("analysis needs hypothesis-search logs; run " +
                                  std::to_string(log.header.run_id) + " is direct");
    }
    for (const auto& o : log.outcomes) {
      const auto* task = corpus.find(o.task_id);
      if (!task) throw std::invalid_argument("task '" + o.task_id + "' is not in the corpus");
      ModuleVerdicts v;
      v.run_id = o.run_id;
      v.task_id = o.task_id;
      v.trial_index = o.trial_index;
      v.implementor_train_ok = o.train_solved;
      v.implementor_test_ok = o.test_solved_any;
      v.program_versions = o.ledger.program_versions;
      if (o.infrastructure_failure) {
        v.missing = true;
        v.events.push_back("infrastructure failure: " + *o.infrastructure_failure);
        out.push_back(std::move(v));
        continue;
      }
      const std::string scope = "judge/" + harness::trial_scope(o.run_id, o.task_id, o.trial_index);
      auto count = [&](const std::vector<pipeline::Hypothesis>& hs, const char* tag) {
        int correct = 0;
        for (const auto& h : hs) {
          const auto j = judge.judge(h.text, task->description, scope + "/" + tag + std::to_string(h.index));
          if (!j.degradation.empty()) v.events.push_back(tag + std::to_string(h.index) + ": " + j.degradation);
          if (!j.verdict) {
            v.missing = true;
          } else if (*j.verdict) {
            ++correct;
          }
        }
        return correct;
      };
      v.generator_correct_count = count(o.generated, "g");
      v.summarizer_correct_count = count(o.summaries, "s");
      v.generator_ok = v.generator_correct_count >= 1;
      v.summarizer_ok = v.summarizer_correct_count >= 1;
      v.retained_correct = v.generator_ok && v.summarizer_ok;
      out.push_back(std::move(v));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Contingency table

std::int64_t ContingencyTable::cell_sum() const noexcept {
  std::int64_t s = 0;
  for (auto c : cells) s += c;
  return s;
}

ContingencyTable table2_fixture() {
  ContingencyTable t;
  t.cells = {1116, 793, 740, 299, 0, 0, 0, 0, 115, 52, 49, 449, 42, 14, 36, 1804};
  t.declared_total = 5500;
  return t;
}

ContingencyTable build_contingency(std::span<const ModuleVerdicts> verdicts) {
  ContingencyTable t;
  for (const auto& v : verdicts) {
    if (v.missing) continue;
    ++t.cells[ContingencyTable::index(v.generator_ok, v.summarizer_ok, v.implementor_train_ok,
                                      v.implementor_test_ok)];
  }
  return t;
}

void check_coverage(std::span<const RunLog> logs, std::span<const ModuleVerdicts> verdicts) {
  std::set<std::tuple<int, std::string, int>> have;
  for (const auto& v : verdicts) have.emplace(v.run_id, v.task_id, v.trial_index);
  for (const auto& log : logs) {
    for (const auto& o : log.outcomes) {
      if (o.infrastructure_failure) continue;
      if (!have.count({o.run_id, o.task_id, o.trial_index})) {
        throw std::invalid_argument("no verdict for run " + std::to_string(o.run_id) + " task " + o.task_id +
                                    " trial " + std::to_string(o.trial_index));
      }
    }
  }
}

bool structural_zero_holds(const ContingencyTable& t) {
  for (bool it : {false, true}) {
    for (bool ie : {false, true}) {
      if (t.cell(false, true, it, ie) != 0) return false;
    }
  }
  return true;
}

namespace {

template <class Pred>
std::int64_t count_if_cells(const ContingencyTable& t, Pred pred) {
  std::int64_t n = 0;
  for (unsigned i = 0; i < 16; ++i) {
    if (pred((i & 8) != 0, (i & 4) != 0, (i & 2) != 0, (i & 1) != 0)) n += t.cells[i];
  }
  return n;
}

double ratio(std::int64_t num, std::int64_t den) {
  return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

}  // namespace

DerivedRates derived_rates(const ContingencyTable& t) {
  DerivedRates r;
  r.total = t.total();
  r.cell_sum = t.cell_sum();
  if (r.total <= 0) throw std::invalid_argument("contingency table is empty");

  const auto g = count_if_cells(t, [](bool g, bool, bool, bool) { return g; });
  const auto s = count_if_cells(t, [](bool, bool s, bool, bool) { return s; });
  const auto it = count_if_cells(t, [](bool, bool, bool it, bool) { return it; });
  const auto ie = count_if_cells(t, [](bool, bool, bool, bool ie) { return ie; });
  r.test_successes = ie;
  r.overall_test_rate = ratio(ie, r.total);
  r.marginals = {ratio(g, r.total), ratio(s, r.total), ratio(it, r.total), ratio(ie, r.total)};
  r.marginals_cell_sum = {ratio(g, r.cell_sum), ratio(s, r.cell_sum), ratio(it, r.cell_sum),
                          ratio(ie, r.cell_sum)};

  r.double_failures = count_if_cells(t, [](bool g, bool s, bool, bool) { return !g && !s; });
  r.rescued = count_if_cells(t, [](bool g, bool s, bool, bool ie) { return !g && !s && ie; });
  r.rescue_rate_total = ratio(r.rescued, r.total);
  r.rescue_rate_double_failures = ratio(r.rescued, r.double_failures);

  r.g_ok_s_fail = count_if_cells(t, [](bool g, bool s, bool, bool) { return g && !s; });
  r.g_ok_s_fail_test_ok = count_if_cells(t, [](bool g, bool s, bool, bool ie) { return g && !s && ie; });
  r.p_test_given_g_ok_s_fail = ratio(r.g_ok_s_fail_test_ok, r.g_ok_s_fail);
  r.both_ok = count_if_cells(t, [](bool g, bool s, bool, bool) { return g && s; });
  r.both_ok_test_ok = count_if_cells(t, [](bool g, bool s, bool, bool ie) { return g && s && ie; });
  r.p_test_given_both_ok = ratio(r.both_ok_test_ok, r.both_ok);
  r.retention = ratio(r.both_ok, g);
  return r;
}

// ---------------------------------------------------------------------------
// Association statistics

std::string_view to_string(Outcome o) { return o == Outcome::ImplementorTrain ? "implementor_train" : "implementor_test"; }

OddsRatio odds_ratio(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  OddsRatio r{a, b, c, d, 0.0, false};
  r.degenerate = a == 0 || b == 0 || c == 0 || d == 0;
  const double num = static_cast<double>(a) * static_cast<double>(d);
  const double den = static_cast<double>(b) * static_cast<double>(c);
  if (den == 0.0) {
    r.value = num == 0.0 ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
  } else {
    r.value = num / den;
  }
  return r;
}

OddsRatio odds_ratio(const ContingencyTable& t, Outcome outcome) {
  const bool train = outcome == Outcome::ImplementorTrain;
  auto cnt = [&](bool g, bool ok) {
    return count_if_cells(t, [&](bool gg, bool, bool it, bool ie) { return gg == g && (train ? it : ie) == ok; });
  };
  return odds_ratio(cnt(true, true), cnt(true, false), cnt(false, true), cnt(false, false));
}

LogisticFit fit_logistic(std::span<const BinomialGroup> groups, int max_iterations, double tolerance) {
  LogisticFit fit;
  for (fit.iterations = 1; fit.iterations <= max_iterations; ++fit.iterations) {
    double g0 = 0, g1 = 0, h00 = 0, h01 = 0, h11 = 0;
    for (const auto& grp : groups) {
      const double eta = fit.intercept + fit.slope * grp.x;
      const double p = 1.0 / (1.0 + std::exp(-eta));
      const double resid = grp.successes - grp.trials * p;
      const double w = grp.trials * p * (1.0 - p);
      g0 += resid;
      g1 += resid * grp.x;
      h00 += w;
      h01 += w * grp.x;
      h11 += w * grp.x * grp.x;
    }
    const double det = h00 * h11 - h01 * h01;
    if (!(std::abs(det) > 0.0)) break;
    const double d0 = (h11 * g0 - h01 * g1) / det;
    const double d1 = (h00 * g1 - h01 * g0) / det;
    fit.intercept += d0;
    fit.slope += d1;
    if (std::abs(d0) < tolerance && std::abs(d1) < tolerance) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

LogisticFit fit_logistic(const OddsRatio& t) {
  const std::array<BinomialGroup, 2> groups{{
      {0.0, static_cast<double>(t.c), static_cast<double>(t.c + t.d)},
      {1.0, static_cast<double>(t.a), static_cast<double>(t.a + t.b)},
  }};
  return fit_logistic(groups);
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: series differ in length");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationReport correlations(std::span<const ModuleVerdicts> verdicts) {
  CorrelationReport r;
  std::vector<double> g, it, ie;
  struct Sums {
    double g = 0, it = 0, ie = 0;
    std::size_t n = 0;
  };
  std::map<std::string, Sums> by_task;
  for (const auto& v : verdicts) {
    if (v.missing) continue;
    g.push_back(v.generator_ok);
    it.push_back(v.implementor_train_ok);
    ie.push_back(v.implementor_test_ok);
    auto& s = by_task[v.task_id];
    s.g += v.generator_ok;
    s.it += v.implementor_train_ok;
    s.ie += v.implementor_test_ok;
    ++s.n;
  }
  r.trials = g.size();
  r.trial_train = pearson(g, it);
  r.trial_test = pearson(g, ie);
  std::vector<double> tg, tit, tie;
  for (const auto& [id, s] : by_task) {
    const double n = static_cast<double>(s.n);
    tg.push_back(s.g / n);
    tit.push_back(s.it / n);
    tie.push_back(s.ie / n);
  }
  r.tasks = tg.size();
  r.task_train = pearson(tg, tit);
  r.task_test = pearson(tg, tie);
  return r;
}

// ---------------------------------------------------------------------------
// Refinement cost and retention

std::string_view to_string(Split s) { return s == Split::TrainOutcome ? "train_outcome" : "test_outcome"; }

double CostSummary::success_fraction() const noexcept {
  return success_mean / static_cast<double>(pipeline::kMaxVersionsPerTrial);
}

double CostSummary::failure_fraction() const noexcept {
  return failure_mean / static_cast<double>(pipeline::kMaxVersionsPerTrial);
}

CostSummary refinement_costs(std::span<const RunLog> logs, Split split) {
  CostSummary c;
  c.split = split;
  double ok_sum = 0, fail_sum = 0;
  for (const auto& log : logs) {
    for (const auto& o : log.outcomes) {
      if (o.infrastructure_failure) continue;
      const bool ok = split == Split::TrainOutcome ? o.train_solved : o.test_solved_any;
      if (ok) {
        ok_sum += o.ledger.program_versions;
        ++c.success_n;
      } else {
        fail_sum += o.ledger.program_versions;
        ++c.failure_n;
      }
    }
  }
  c.success_mean = c.success_n ? ok_sum / static_cast<double>(c.success_n) : 0.0;
  c.failure_mean = c.failure_n ? fail_sum / static_cast<double>(c.failure_n) : 0.0;
  return c;
}

std::optional<double> retention_rate(std::span<const ModuleVerdicts> verdicts) {
  std::size_t g = 0, kept = 0;
  for (const auto& v : verdicts) {
    if (v.missing || !v.generator_ok) continue;
    ++g;
    kept += v.retained_correct ? 1 : 0;
  }
  if (!g) return std::nullopt;
  return static_cast<double>(kept) / static_cast<double>(g);
}

std::vector<ModuleAccuracy> module_accuracy(std::span<const ModuleVerdicts> verdicts) {
  const std::array<std::pair<const char*, bool ModuleVerdicts::*>, 4> modules{{
      {"generator", &ModuleVerdicts::generator_ok},
      {"summarizer", &ModuleVerdicts::summarizer_ok},
      {"implementor_train", &ModuleVerdicts::implementor_train_ok},
      {"implementor_test", &ModuleVerdicts::implementor_test_ok},
  }};
  std::vector<ModuleAccuracy> out;
  for (const auto& [name, field] : modules) {
    ModuleAccuracy m;
    m.module = name;
    std::map<std::string, std::pair<double, std::size_t>> by_task;
    double sum = 0;
    for (const auto& v : verdicts) {
      if (v.missing) continue;
      const double x = v.*field ? 1.0 : 0.0;
      sum += x;
      ++m.trials;
      auto& [s, n] = by_task[v.task_id];
      s += x;
      ++n;
    }
    m.pooled = m.trials ? sum / static_cast<double>(m.trials) : 0.0;
    std::vector<double> means;
    for (const auto& [id, sn] : by_task) means.push_back(sn.first / static_cast<double>(sn.second));
    const auto ms = harness::mean_std(means);
    m.task_mean = ms.mean;
    m.task_std = ms.std;
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

AnalysisReport analyze_table(const ContingencyTable& table, std::string source) {
  AnalysisReport r;
  r.source = std::move(source);
  r.table = table;
  r.rates = derived_rates(table);
  r.odds_train = odds_ratio(table, Outcome::ImplementorTrain);
  r.odds_test = odds_ratio(table, Outcome::ImplementorTest);
  r.structural_zero = structural_zero_holds(table);
  if (r.structural_zero) {
    r.notes.push_back("structural zero: no trial has the summarizer succeeding while the generator fails");
  }
  if (table.declared_total && *table.declared_total != table.cell_sum()) {
    r.notes.push_back("cells sum to " + std::to_string(table.cell_sum()) + " but the declared total is " +
                      std::to_string(*table.declared_total) + "; rates use the declared total");
  }
  return r;
}

AnalysisReport analyze_logs(std::span<const RunLog> logs, const corpus::Corpus& corpus, Judge& judge) {
  harness::check_compatible(logs);
  if (logs.front().header.corpus_fingerprint != corpus.fingerprint()) {
    throw std::invalid_argument("run logs were produced from a different corpus");
  }
  const auto verdicts = judge_logs(logs, corpus, judge);
  check_coverage(logs, verdicts);
  auto r = analyze_table(build_contingency(verdicts), "logs");
  r.modules = module_accuracy(verdicts);
  r.correlation = correlations(verdicts);
  r.costs_train = refinement_costs(logs, Split::TrainOutcome);
  r.costs_test = refinement_costs(logs, Split::TestOutcome);
  r.retention = retention_rate(verdicts);
  r.judge_calls = judge.calls();
  r.missing = static_cast<std::size_t>(
      std::count_if(verdicts.begin(), verdicts.end(), [](const ModuleVerdicts& v) { return v.missing; }));
  if (r.missing) r.notes.push_back(std::to_string(r.missing) + " trials excluded from denominators");
  return r;
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json marginals_json(const Marginals& m) {
  return {{"generator", m.generator},
          {"summarizer", m.summarizer},
          {"implementor_train", m.implementor_train},
          {"implementor_test", m.implementor_test}};
}

json odds_json(const OddsRatio& o) {
  const auto fit = fit_logistic(o);
  return {{"a", o.a},
          {"b", o.b},
          {"c", o.c},
          {"d", o.d},
          {"odds_ratio", number_or_null(o.value)},
          {"degenerate", o.degenerate},
          {"logistic_fit_odds_ratio", fit.converged ? number_or_null(std::exp(fit.slope)) : json(nullptr)}};
}

json costs_json(const CostSummary& c) {
  return {{"split", to_string(c.split)},
          {"success_n", c.success_n},
          {"success_mean_versions", c.success_mean},
          {"success_budget_fraction", c.success_fraction()},
          {"failure_n", c.failure_n},
          {"failure_mean_versions", c.failure_mean},
          {"failure_budget_fraction", c.failure_fraction()}};
}

}  // namespace

json to_json(const AnalysisReport& r) {
  const auto& d = r.rates;
  json j;
  j["source"] = r.source;
  j["contingency"] = {{"cells", r.table.cells},
                      {"cell_sum", r.table.cell_sum()},
                      {"declared_total", r.table.declared_total ? json(*r.table.declared_total) : json(nullptr)},
                      {"total", r.table.total()}};
  j["rates"] = {{"overall_test_rate", d.overall_test_rate},
                {"test_successes", d.test_successes},
                {"marginals", marginals_json(d.marginals)},
                {"marginals_over_cell_sum", marginals_json(d.marginals_cell_sum)},
                {"double_failures", d.double_failures},
                {"rescued", d.rescued},
                {"rescue_rate_total", d.rescue_rate_total},
                {"rescue_rate_double_failures", d.rescue_rate_double_failures},
                {"p_test_given_g_ok_s_fail", d.p_test_given_g_ok_s_fail},
                {"g_ok_s_fail", d.g_ok_s_fail},
                {"p_test_given_both_ok", d.p_test_given_both_ok},
                {"both_ok", d.both_ok},
                {"retention_from_table", d.retention}};
  j["odds_ratio"] = {{"implementor_train", odds_json(r.odds_train)},
                     {"implementor_test", odds_json(r.odds_test)}};
  j["structural_zero"] = r.structural_zero;
  json modules = json::array();
  for (const auto& m : r.modules) {
    modules.push_back({{"module", m.module},
                       {"pooled", m.pooled},
                       {"task_mean", m.task_mean},
                       {"task_std", m.task_std},
                       {"trials", m.trials}});
  }
  j["module_accuracy"] = modules;
  if (r.correlation) {
    const auto& c = *r.correlation;
    j["correlations"] = {{"trial_level_train", optional_json(c.trial_train)},
                         {"trial_level_test", optional_json(c.trial_test)},
                         {"task_level_train", optional_json(c.task_train)},
                         {"task_level_test", optional_json(c.task_test)},
                         {"trials", c.trials},
                         {"tasks", c.tasks}};
  }
  if (r.costs_train) j["refinement_costs"]["train_outcome"] = costs_json(*r.costs_train);
  if (r.costs_test) j["refinement_costs"]["test_outcome"] = costs_json(*r.costs_test);
  j["retention_rate"] = optional_json(r.retention);
  j["judge_calls"] = r.judge_calls;
  j["missing_trials"] = r.missing;
  j["notes"] = r.notes;
  return j;
}

std::string table2_csv(const ContingencyTable& t) {
  std::string out = "index,generator,summarizer,implementor_train,implementor_test,count,proportion_pct\n";
  auto word = [](bool ok) { return ok ? "success" : "failure"; };
  for (unsigned i = 0; i < 16; ++i) {
    char pct[32];
    std::snprintf(pct, sizeof pct, "%.1f", 100.0 * ratio(t.cells[i], t.total()));
    out += std::to_string(i + 1) + "," + word(i & 8) + "," + word(i & 4) + "," + word(i & 2) + "," +
           word(i & 1) + "," + std::to_string(t.cells[i]) + "," + pct + "\n";
  }
  out += "total,,,,," + std::to_string(t.total()) + ",100.0\n";
  return out;
}

std::string table3_csv(const AnalysisReport& r) {
  std::string out = "module,mean_accuracy,std\n";
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };
  if (!r.modules.empty()) {
    for (const auto& m : r.modules) out += m.module + "," + fmt(m.task_mean) + "," + fmt(m.task_std) + "\n";
    return out;
  }
  // Counts only: pooled marginals, no per-task dispersion.
  const auto& m = r.rates.marginals;
  out += "generator," + fmt(m.generator) + ",\n";
  out += "summarizer," + fmt(m.summarizer) + ",\n";
  out += "implementor_train," + fmt(m.implementor_train) + ",\n";
  out += "implementor_test," + fmt(m.implementor_test) + ",\n";
  return out;
}

}  // namespace indukt::analysis
