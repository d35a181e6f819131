#include "indukt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "indukt/util.hpp"

namespace indukt::harness {

using nlohmann::json;
using pipeline::CandidateProgram;
using pipeline::Hypothesis;
using pipeline::ProgramVersion;
using pipeline::SelectedProgram;

// ---------------------------------------------------------------------------
// Serialization

namespace {

exec::ExampleStatus status_from_string(std::string_view s) {
  if (s == "match") return exec::ExampleStatus::Match;
  if (s == "mismatch") return exec::ExampleStatus::Mismatch;
  if (s == "execution_error") return exec::ExampleStatus::ExecutionError;
  throw LogFormatError("unknown example status '" + std::string(s) + "'");
}

json hypothesis_json(const Hypothesis& h) {
  json j{{"index", h.index}, {"text", h.text}};
  if (!h.parent_indices.empty()) j["parents"] = h.parent_indices;
  return j;
}

Hypothesis hypothesis_from(const json& j, Hypothesis::Source source) {
  Hypothesis h;
  h.source = source;
  h.index = j.at("index").get<int>();
  h.text = j.at("text").get<std::string>();
  if (j.contains("parents")) h.parent_indices = j["parents"].get<std::vector<int>>();
  return h;
}

json candidate_json(const CandidateProgram& c) {
  json versions = json::array();
  for (const auto& v : c.versions) {
    json statuses = json::array();
    for (auto s : v.report.statuses) statuses.push_back(exec::to_string(s));
    versions.push_back({{"round", v.round},
                        {"program", v.text},
                        {"matches", v.report.matches},
                        {"total", v.report.total},
                        {"passed", v.report.all_passed},
                        {"statuses", statuses},
                        {"feedback", v.report.feedback}});
  }
  return {{"slot", c.hypothesis_slot},
          {"candidate", c.candidate_index},
          {"frozen", c.frozen},
          {"versions", versions}};
}

CandidateProgram candidate_from(const json& j) {
  CandidateProgram c;
  c.hypothesis_slot = j.at("slot").get<int>();
  c.candidate_index = j.at("candidate").get<int>();
  c.frozen = j.at("frozen").get<bool>();
  for (const auto& v : j.at("versions")) {
    ProgramVersion pv;
    pv.round = v.at("round").get<int>();
    pv.text = v.at("program").get<std::string>();
    pv.report.matches = v.at("matches").get<std::size_t>();
    pv.report.total = v.at("total").get<std::size_t>();
    pv.report.all_passed = v.at("passed").get<bool>();
    for (const auto& s : v.at("statuses")) pv.report.statuses.push_back(status_from_string(s.get<std::string>()));
    pv.report.feedback = v.at("feedback").get<std::string>();
    c.versions.push_back(std::move(pv));
  }
  return c;
}

}  // namespace

json to_json(const TrialOutcome& o) {
  json generated = json::array();
  for (const auto& h : o.generated) generated.push_back(hypothesis_json(h));
  json summaries = json::array();
  for (const auto& h : o.summaries) summaries.push_back(hypothesis_json(h));
  json candidates = json::array();
  for (const auto& c : o.candidates) candidates.push_back(candidate_json(c));
  json selected = json::array();
  for (const auto& s : o.selected) {
    json js{{"program", s.text}, {"train_accuracy", s.train_accuracy}, {"test_correct", s.test_correct}};
    js["test_output"] = s.test_output ? json(*s.test_output) : json(nullptr);
    if (!s.test_error.empty()) js["test_error"] = s.test_error;
    selected.push_back(std::move(js));
  }
  json j{{"task_id", o.task_id},
         {"run_id", o.run_id},
         {"trial", o.trial_index},
         {"mode", pipeline::to_string(o.mode)},
         {"generated", generated},
         {"summaries", summaries},
         {"candidates", candidates},
         {"selected", selected},
         {"used_fallback", o.used_fallback},
         {"train_solved", o.train_solved},
         {"test_accuracy", o.test_accuracy},
         {"test_solved_any", o.test_solved_any},
         {"ledger",
          {{"generator_calls", o.ledger.generator_calls},
           {"summarizer_calls", o.ledger.summarizer_calls},
           {"implementor_calls", o.ledger.implementor_calls},
           {"program_versions", o.ledger.program_versions}}},
         {"events", o.events}};
  j["infrastructure_failure"] = o.infrastructure_failure ? json(*o.infrastructure_failure) : json(nullptr);
  return j;
}

TrialOutcome outcome_from_json(const json& j) {
  try {
    TrialOutcome o;
    o.task_id = j.at("task_id").get<std::string>();
    o.run_id = j.at("run_id").get<int>();
    o.trial_index = j.at("trial").get<int>();
    o.mode = pipeline::mode_from_string(j.at("mode").get<std::string>());
    for (const auto& h : j.at("generated")) o.generated.push_back(hypothesis_from(h, Hypothesis::Source::Generator));
    for (const auto& h : j.at("summaries")) o.summaries.push_back(hypothesis_from(h, Hypothesis::Source::Summarizer));
    for (const auto& c : j.at("candidates")) o.candidates.push_back(candidate_from(c));
    for (const auto& s : j.at("selected")) {
      SelectedProgram sp;
      sp.text = s.at("program").get<std::string>();
      sp.train_accuracy = s.at("train_accuracy").get<double>();
      sp.test_correct = s.at("test_correct").get<bool>();
      if (!s.at("test_output").is_null()) sp.test_output = s["test_output"].get<dsl::List>();
      if (s.contains("test_error")) sp.test_error = s["test_error"].get<std::string>();
      o.selected.push_back(std::move(sp));
    }
    o.used_fallback = j.at("used_fallback").get<bool>();
    o.train_solved = j.at("train_solved").get<bool>();
    o.test_accuracy = j.at("test_accuracy").get<double>();
    o.test_solved_any = j.at("test_solved_any").get<bool>();
    const auto& l = j.at("ledger");
    o.ledger.generator_calls = l.at("generator_calls").get<int>();
    o.ledger.summarizer_calls = l.at("summarizer_calls").get<int>();
    o.ledger.implementor_calls = l.at("implementor_calls").get<int>();
    o.ledger.program_versions = l.at("program_versions").get<int>();
    o.events = j.at("events").get<std::vector<std::string>>();
    if (!j.at("infrastructure_failure").is_null()) {
      o.infrastructure_failure = j["infrastructure_failure"].get<std::string>();
    }
    return o;
  } catch (const json::exception& e) {
    throw LogFormatError(std::string("malformed trial outcome: ") + e.what());
  }
}

std::size_t RunLog::flagged() const {
  return static_cast<std::size_t>(std::count_if(outcomes.begin(), outcomes.end(), [](const TrialOutcome& o) {
    return o.infrastructure_failure.has_value();
  }));
}

std::string serialize_run_log(const RunLog& log) {
  const auto& h = log.header;
  json header{{"record", "header"},
              {"schema_version", h.schema_version},
              {"run_id", h.run_id},
              {"mode", pipeline::to_string(h.mode)},
              {"provider", h.provider},
              {"corpus_fingerprint", h.corpus_fingerprint},
              {"config", h.config}};
  std::string out = header.dump() + "\n";
  for (const auto& o : log.outcomes) out += to_json(o).dump() + "\n";
  return out;
}

RunLog parse_run_log(std::string_view text) {
  RunLog log;
  std::istringstream in{std::string(text)};
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw LogFormatError("run log line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!have_header) {
      if (!j.is_object() || j.value("record", "") != "header") {
        throw LogFormatError("run log does not start with a header record");
      }
      try {
        log.header.schema_version = j.at("schema_version").get<int>();
        if (log.header.schema_version != kSchemaVersion) {
          throw LogFormatError("unsupported run log schema version " +
                               std::to_string(log.header.schema_version));
        }
        log.header.run_id = j.at("run_id").get<int>();
        log.header.mode = pipeline::mode_from_string(j.at("mode").get<std::string>());
        log.header.provider = j.at("provider").get<std::string>();
        log.header.corpus_fingerprint = j.at("corpus_fingerprint").get<std::string>();
        log.header.config = j.at("config");
      } catch (const json::exception& e) {
        throw LogFormatError(std::string("malformed run log header: ") + e.what());
      }
      have_header = true;
      continue;
    }
    log.outcomes.push_back(outcome_from_json(j));
  }
  if (!have_header) throw LogFormatError("empty run log");
  return log;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_run_log(const RunLog& log, const std::filesystem::path& path) {
  write_text(path, serialize_run_log(log));
}

RunLog read_run_log(const std::filesystem::path& path) { return parse_run_log(read_text(path)); }

// ---------------------------------------------------------------------------
// Experiment

std::uint64_t run_seed(std::uint64_t master_seed, int run_id) {
  return combine_seed(master_seed, static_cast<std::uint64_t>(run_id));
}

std::string trial_scope(int run_id, std::string_view task_id, int trial_index) {
  return "run" + std::to_string(run_id) + "/" + std::string(task_id) + "/t" + std::to_string(trial_index);
}

ExperimentFailed::ExperimentFailed(std::string message, std::vector<RunLog> logs)
    : std::runtime_error(std::move(message)), logs_(std::move(logs)) {}

std::vector<RunLog> run_experiment(const corpus::Corpus& corpus, const ExperimentConfig& config,
                                   const ProviderFactory& factory,
                                   const exec::Executor& executor) {
  if (config.n_runs < 1) throw std::invalid_argument("n_runs must be at least 1");
  const auto tasks = corpus.tasks();
  const std::size_t per_run = tasks.size() * static_cast<std::size_t>(kTrials);
  const std::size_t units = per_run * static_cast<std::size_t>(config.n_runs);

  std::vector<TrialOutcome> slots(units);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      if (abort.load()) return;
      const std::size_t u = next.fetch_add(1);
      if (u >= units) return;
      const int run_id = static_cast<int>(u / per_run) + 1;
      const std::size_t within = u % per_run;
      const auto& task = tasks[within / kTrials];
      const int trial_index = static_cast<int>(within % kTrials) + 1;
      try {
        const auto spec = corpus::trial(task, trial_index);
        auto provider = factory(task, trial_index, run_id, run_seed(config.master_seed, run_id));
        pipeline::TrialContext ctx{run_id, trial_scope(run_id, task.id, trial_index)};
        slots[u] = pipeline::run_trial(config.mode, spec, *provider, executor, config.pipeline, ctx);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        abort.store(true);
        return;
      }
    }
  };

  const std::size_t width = std::max<std::size_t>(1, std::min(config.workers, units));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < width; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::vector<RunLog> logs;
  std::string failures;
  for (int r = 1; r <= config.n_runs; ++r) {
    RunLog log;
    log.header.run_id = r;
    log.header.mode = config.mode;
    log.header.provider = config.provider_description;
    log.header.corpus_fingerprint = corpus.fingerprint();
    log.header.config = config.snapshot;
    const auto first = slots.begin() + static_cast<std::ptrdiff_t>((r - 1) * per_run);
    log.outcomes.assign(std::make_move_iterator(first),
                        std::make_move_iterator(first + static_cast<std::ptrdiff_t>(per_run)));
    const double fraction = per_run ? static_cast<double>(log.flagged()) / static_cast<double>(per_run) : 0.0;
    if (fraction > config.max_flagged_fraction) {
      failures += "run " + std::to_string(r) + ": " + std::to_string(log.flagged()) + " of " +
                  std::to_string(per_run) + " trials hit infrastructure failures; ";
    }
    logs.push_back(std::move(log));
  }
  if (!failures.empty()) throw ExperimentFailed(failures, std::move(logs));
  return logs;
}

ProviderFactory synthetic_factory(providers::SyntheticConfig base) {
  // One provider per task and run; synthetic responses depend only on
  // (seed, request), so sharing across trials is safe.
  auto cache = std::make_shared<std::map<std::pair<std::string, int>, providers::ProviderPtr>>();
  auto mutex = std::make_shared<std::mutex>();
  return [base, cache, mutex](const corpus::Task& task, int, int run_id, std::uint64_t seed) {
    std::lock_guard lock(*mutex);
    auto& slot = (*cache)[{task.id, run_id}];
    if (!slot) {
      auto cfg = base;
      cfg.description = task.description;
      cfg.reference_program = task.reference_program.value_or("identity");
      cfg.seed = seed;
      slot = std::make_shared<providers::SyntheticProvider>(cfg);
    }
    return slot;
  };
}

// ---------------------------------------------------------------------------
// Metrics

std::string_view to_string(Definition d) { return d == Definition::Cumulative ? "cumulative" : "per-trial"; }

Definition definition_from_string(std::string_view name) {
  if (name == "cumulative") return Definition::Cumulative;
  if (name == "per-trial" || name == "per_trial") return Definition::PerTrial;
  throw std::invalid_argument("unknown acquisition definition '" + std::string(name) + "'");
}

void check_compatible(std::span<const RunLog> logs) {
  if (logs.empty()) throw IncompatibleLogs("no run logs given");
  const auto& h = logs.front().header;
  for (const auto& log : logs) {
    if (log.header.schema_version != h.schema_version) throw IncompatibleLogs("run logs have different schema versions");
    if (log.header.corpus_fingerprint != h.corpus_fingerprint) throw IncompatibleLogs("run logs come from different corpora");
    if (log.header.mode != h.mode) throw IncompatibleLogs("run logs mix modes");
  }
}

Curve acquisition_curve(std::span<const RunLog> logs, Definition definition) {
  check_compatible(logs);
  Curve curve{};
  for (const auto& log : logs) {
    // solved[task][t-1]
    std::map<std::string, std::array<bool, kTrials>> solved;
    for (const auto& o : log.outcomes) {
      auto& row = solved.try_emplace(o.task_id, std::array<bool, kTrials>{}).first->second;
      if (o.trial_index >= 1 && o.trial_index <= kTrials && o.test_solved_any) row[o.trial_index - 1] = true;
    }
    for (const auto& [id, row] : solved) {
      bool acquired = false;
      for (int t = 0; t < kTrials; ++t) {
        acquired = definition == Definition::Cumulative ? (acquired || row[t]) : row[t];
        if (acquired) curve[t] += 1.0;
      }
    }
  }
  for (auto& v : curve) v /= static_cast<double>(logs.size());
  return curve;
}

std::vector<TaskAccuracy> per_task_accuracy(std::span<const RunLog> logs) {
  check_compatible(logs);
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& log : logs) {
    for (const auto& o : log.outcomes) {
      auto& [sum, n] = acc[o.task_id];
      if (o.infrastructure_failure) continue;
      sum += o.test_accuracy;
      ++n;
    }
  }
  std::vector<TaskAccuracy> out;
  for (const auto& [id, sn] : acc) {
    if (sn.second == 0) continue;
    out.push_back({id, sn.first / static_cast<double>(sn.second), sn.second});
  }
  return out;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) return {};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return {mean, std::sqrt(var)};
}

MeanStd mean_test_accuracy(std::span<const RunLog> logs) {
  std::vector<double> means;
  for (const auto& row : per_task_accuracy(logs)) means.push_back(row.mean);
  return mean_std(means);
}

MetricsReport compute_metrics(std::span<const RunLog> logs, Definition definition) {
  MetricsReport r;
  r.definition = definition;
  r.n_runs = static_cast<int>(logs.size());
  r.acquisition = acquisition_curve(logs, definition);
  r.per_task = per_task_accuracy(logs);
  std::vector<double> means;
  for (const auto& row : r.per_task) means.push_back(row.mean);
  const auto ms = mean_std(means);
  r.mean_test_accuracy = ms.mean;
  r.std_test_accuracy = ms.std;
  return r;
}

json to_json(const MetricsReport& r) {
  json per_task = json::array();
  for (const auto& row : r.per_task) {
    per_task.push_back({{"task_id", row.task_id}, {"mean_test_accuracy", row.mean}, {"outcomes", row.outcomes}});
  }
  return {{"definition", to_string(r.definition)},
          {"n_runs", r.n_runs},
          {"acquisition_curve", r.acquisition},
          {"mean_test_accuracy", r.mean_test_accuracy},
          {"std_test_accuracy", r.std_test_accuracy},
          {"per_task", per_task}};
}

MetricsReport metrics_from_json(const json& j) {
  MetricsReport r;
  r.definition = definition_from_string(j.at("definition").get<std::string>());
  r.n_runs = j.at("n_runs").get<int>();
  const auto curve = j.at("acquisition_curve").get<std::vector<double>>();
  if (curve.size() != static_cast<std::size_t>(kTrials)) throw LogFormatError("acquisition curve must have 11 values");
  std::copy(curve.begin(), curve.end(), r.acquisition.begin());
  r.mean_test_accuracy = j.at("mean_test_accuracy").get<double>();
  r.std_test_accuracy = j.at("std_test_accuracy").get<double>();
  for (const auto& row : j.at("per_task")) {
    r.per_task.push_back({row.at("task_id").get<std::string>(), row.at("mean_test_accuracy").get<double>(),
                          row.at("outcomes").get<std::size_t>()});
  }
  return r;
}

namespace {

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw LogFormatError("bad number '" + std::string(s) + "' in CSV");
  }
  return v;
}

std::vector<std::vector<std::string>> csv_rows(std::string_view text, std::string_view header) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || trim(line) != header) {
    throw LogFormatError("CSV header must be '" + std::string(header) + "'");
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(trim(line));
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

std::string acquisition_csv(const Curve& curve) {
  std::string out = "trial,mean_acquired\n";
  for (int t = 0; t < kTrials; ++t) out += std::to_string(t + 1) + "," + fmt(curve[t]) + "\n";
  return out;
}

Curve parse_acquisition_csv(std::string_view text) {
  const auto rows = csv_rows(text, "trial,mean_acquired");
  if (rows.size() != static_cast<std::size_t>(kTrials)) throw LogFormatError("acquisition CSV must have 11 rows");
  Curve curve{};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != 2 || rows[i][0] != std::to_string(i + 1)) throw LogFormatError("bad acquisition CSV row");
    curve[i] = parse_double(rows[i][1]);
  }
  return curve;
}

std::string per_task_csv(const std::vector<TaskAccuracy>& rows) {
  auto sorted = rows;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.task_id < b.task_id; });
  std::string out = "task_id,mean_test_accuracy,outcomes\n";
  for (const auto& r : sorted) out += r.task_id + "," + fmt(r.mean) + "," + std::to_string(r.outcomes) + "\n";
  return out;
}

std::vector<TaskAccuracy> parse_per_task_csv(std::string_view text) {
  std::vector<TaskAccuracy> out;
  for (const auto& row : csv_rows(text, "task_id,mean_test_accuracy,outcomes")) {
    if (row.size() != 3) throw LogFormatError("bad per-task CSV row");
    out.push_back({row[0], parse_double(row[1]), static_cast<std::size_t>(std::stoull(row[2]))});
  }
  return out;
}

std::vector<LiteratureValue> load_literature(const std::filesystem::path& path) {
  const auto j = json::parse(read_text(path));
  std::vector<LiteratureValue> out;
  for (const auto& e : j.at("values")) {
    out.push_back({e.at("label").get<std::string>(), e.at("mean_test_accuracy").get<double>(),
                   e.at("std").get<double>()});
  }
  return out;
}

std::string summary_csv(const MetricsReport& report, const std::vector<LiteratureValue>& overlay) {
  std::string out = "source,label,mean_test_accuracy,std\n";
  out += "this_run,measured," + fmt(report.mean_test_accuracy) + "," + fmt(report.std_test_accuracy) + "\n";
  for (const auto& v : overlay) out += "literature," + v.label + "," + fmt(v.mean) + "," + fmt(v.std) + "\n";
  return out;
}

}  // namespace indukt::harness
