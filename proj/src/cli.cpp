#include "indukt/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "indukt/analysis.hpp"
#include "indukt/corpus.hpp"
#include "indukt/executor.hpp"
#include "indukt/harness.hpp"
#include "indukt/pipeline.hpp"
#include "indukt/prompts.hpp"
#include "indukt/providers.hpp"
#include "indukt/util.hpp"

namespace indukt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Bad configuration detected after parsing; maps to exit 2.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
  return out;
}

/// Flat "key = value" lines; '#' starts a comment. Keys use underscores or
/// dashes and become "--key=value" arguments.
std::vector<std::string> config_file_args(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::vector<std::string> args;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    auto key = trim(std::string_view(t).substr(0, eq));
    auto value = trim(std::string_view(t).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    for (auto& c : key) c = c == '_' ? '-' : c;
    args.push_back("--" + key + "=" + value);
  }
  return args;
}

void add_run_options(CLI::App* app, RunConfig& c, std::string& sandbox_command) {
  app->add_option("--corpus", c.corpus, "Corpus JSON file");
  app->add_option("--mode", c.mode, "hypothesis-search | direct");
  app->add_option("--provider", c.provider, "synthetic | live");
  app->add_option("--endpoint", c.endpoint, "Chat-completions URL (live)");
  app->add_option("--api-key-env", c.api_key_env, "Variable holding the API key (live)");
  app->add_option("--multi-sample", c.multi_sample, "Endpoint accepts n > 1 (live)");
  app->add_option("--model", c.model);
  app->add_option("--max-tokens", c.max_tokens);
  app->add_option("--generator-temperature", c.generator_temperature);
  app->add_option("--implementor-temperature", c.implementor_temperature);
  app->add_option("--p-gen", c.p_gen, "Synthetic: generator emits the true rule");
  app->add_option("--p-impl", c.p_impl, "Synthetic: correct program given the true rule");
  app->add_option("--p-rescue", c.p_rescue, "Synthetic: correct program without it");
  app->add_option("--p-retain", c.p_retain, "Synthetic: summarizer keeps the true rule");
  app->add_option("--p-direct", c.p_direct, "Synthetic: direct generation is correct");
  app->add_option("--executor", c.executor, "builtin_dsl | external_sandbox");
  app->add_option("--step-budget", c.step_budget);
  app->add_option("--wall-clock-ms", c.wall_clock_ms);
  app->add_option("--memory-mib", c.memory_mib);
  app->add_option("--sandbox-command", sandbox_command, "Worker argv, space separated");
  app->add_option("--budget-accounting", c.budget_accounting, "paper | strict");
  app->add_option("--prompts", c.prompts_dir, "Directory overriding bundled prompt templates");
  app->add_option("--seed", c.seed);
  app->add_option("--runs", c.runs);
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--workers", c.workers, "Concurrent trials (0: all cores)");
}

struct Prepared {
  corpus::Corpus corpus;
  std::unique_ptr<exec::Executor> executor;
  std::unique_ptr<prompts::PromptSet> prompts;
  harness::ExperimentConfig experiment;
};

Prepared prepare(const RunConfig& c) {
  if (c.corpus.empty()) throw ConfigError("--corpus is required");
  Prepared p;
  try {
    p.corpus = corpus::load_corpus(c.corpus);
  } catch (const corpus::ValidationError& e) {
    throw ConfigError(std::string("corpus invalid: ") + e.what());
  } catch (const std::exception& e) {
    throw ConfigError(std::string("corpus: ") + e.what());
  }
  if (c.runs < 1) throw ConfigError("--runs must be at least 1");
  for (double v : {c.p_gen, c.p_impl, c.p_rescue, c.p_retain, c.p_direct}) {
    if (v < 0.0 || v > 1.0) throw ConfigError("synthetic probabilities must lie in [0, 1]");
  }
  if (c.provider != "synthetic" && c.provider != "live") {
    throw ConfigError("unknown provider '" + c.provider + "' (synthetic | live)");
  }
  auto& e = p.experiment;
  try {
    e.mode = pipeline::mode_from_string(c.mode);
    e.pipeline.accounting = pipeline::accounting_from_string(c.budget_accounting);
    exec::ExecutorConfig xc;
    xc.backend = exec::backend_from_string(c.executor);
    xc.step_budget = c.step_budget;
    xc.wall_clock_limit = std::chrono::milliseconds(c.wall_clock_ms);
    xc.memory_cap_mib = c.memory_mib;
    xc.sandbox_command = c.sandbox_command;
    xc.workers = c.workers;
    xc.validate();
    p.executor = std::make_unique<exec::Executor>(xc);
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  if (!c.prompts_dir.empty()) {
    if (!fs::is_directory(c.prompts_dir)) throw ConfigError("prompt directory not found: " + c.prompts_dir);
    p.prompts = std::make_unique<prompts::PromptSet>(prompts::PromptSet::load(c.prompts_dir));
    e.pipeline.prompts = p.prompts.get();
  }
  e.pipeline.profile.model_name = c.model;
  e.pipeline.profile.max_tokens = c.max_tokens;
  e.pipeline.profile.generator.temperature = c.generator_temperature;
  e.pipeline.profile.implementor.temperature = c.implementor_temperature;
  e.pipeline.generator_multi_sample = c.provider != "live" || c.multi_sample;
  e.n_runs = c.runs;
  e.master_seed = c.seed;
  e.workers = c.workers ? c.workers : std::max(1u, std::thread::hardware_concurrency());
  e.snapshot = snapshot(c);
  e.provider_description =
      c.provider == "live" ? "live:" + c.model + "@" + c.endpoint : "synthetic";
  return p;
}

providers::SyntheticConfig synthetic_config(const RunConfig& c) {
  providers::SyntheticConfig s;
  s.p_gen = c.p_gen;
  s.p_impl = c.p_impl;
  s.p_rescue = c.p_rescue;
  s.p_retain = c.p_retain;
  s.p_direct = c.p_direct;
  return s;
}

providers::ProviderPtr make_live(const std::string& endpoint, const std::string& key_env, bool multi) {
  const char* key = std::getenv(key_env.c_str());
  if (!key || !*key) throw providers::CredentialMissing(key_env);
  if (endpoint.empty()) throw ConfigError("--endpoint is required for the live provider");
  providers::LiveConfig lc;
  lc.endpoint = endpoint;
  lc.api_key_env = key_env;
  lc.supports_multi_sample = multi;
  return std::make_shared<providers::LiveProvider>(lc);  // may throw CredentialMissing
}

harness::ProviderFactory shared_factory(providers::ProviderPtr provider) {
  return [provider](const corpus::Task&, int, int, std::uint64_t) { return provider; };
}

void write_logs(const std::vector<harness::RunLog>& logs, const fs::path& out, std::ostream& os) {
  for (const auto& log : logs) {
    const auto path = out / ("run_" + std::to_string(log.header.run_id) + ".ndjson");
    harness::write_run_log(log, path);
    os << "wrote " << path.string() << " (" << log.outcomes.size() << " outcomes, " << log.flagged()
       << " flagged)\n";
  }
}

int execute(const RunConfig& c, const harness::ProviderFactory& factory, Prepared& p, std::ostream& out,
            std::ostream& err) {
  fs::create_directories(c.out);
  try {
    const auto logs = harness::run_experiment(p.corpus, p.experiment, factory, *p.executor);
    write_logs(logs, c.out, out);
    const auto metrics = harness::compute_metrics(logs);
    out << "mean test accuracy " << metrics.mean_test_accuracy << " (std " << metrics.std_test_accuracy << ")\n";
    return kExitOk;
  } catch (const harness::ExperimentFailed& e) {
    write_logs(e.logs(), c.out, out);
    err << "error: " << e.what() << "\n";
    return kExitInfrastructure;
  }
}

int cmd_run(RunConfig c, std::ostream& out, std::ostream& err) {
  auto p = prepare(c);
  harness::ProviderFactory factory;
  if (c.provider == "live") {
    factory = shared_factory(make_live(c.endpoint, c.api_key_env, c.multi_sample));
  } else {
    factory = harness::synthetic_factory(synthetic_config(c));
  }
  if (c.record) {
    fs::create_directories(c.out);
    auto writer = std::make_shared<providers::TranscriptWriter>(fs::path(c.out) / "transcript.ndjson");
    factory = [inner = factory, writer](const corpus::Task& t, int trial, int run, std::uint64_t seed) {
      return std::make_shared<providers::RecordingProvider>(inner(t, trial, run, seed), writer);
    };
  }
  return execute(c, factory, p, out, err);
}

int cmd_replay(RunConfig c, const std::string& transcript, const std::string& from_log, std::ostream& out,
               std::ostream& err) {
  if (!from_log.empty()) {
    const auto log = harness::read_run_log(from_log);
    auto restored = from_snapshot(log.header.config);
    restored.out = c.out;
    restored.workers = c.workers;
    c = restored;
  }
  if (transcript.empty()) throw ConfigError("--transcript is required");
  if (!fs::exists(transcript)) throw ConfigError("transcript not found: " + transcript);
  auto p = prepare(c);
  auto replay = providers::ReplayProvider::load(transcript);
  return execute(c, shared_factory(replay), p, out, err);
}

std::vector<harness::RunLog> read_logs(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ConfigError("no run logs given");
  std::vector<harness::RunLog> logs;
  for (const auto& path : paths) logs.push_back(harness::read_run_log(path));
  return logs;
}

int cmd_metrics(const std::vector<std::string>& paths, const std::string& definition, const std::string& overlay,
                const std::string& out_dir, std::ostream& out) {
  const auto logs = read_logs(paths);
  harness::Definition def;
  try {
    def = harness::definition_from_string(definition);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto report = harness::compute_metrics(logs, def);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  harness::write_text(dir / "acquisition.csv", harness::acquisition_csv(report.acquisition));
  harness::write_text(dir / "per_task.csv", harness::per_task_csv(report.per_task));
  harness::write_text(dir / "metrics.json", harness::to_json(report).dump(2) + "\n");
  std::vector<harness::LiteratureValue> lit;
  if (!overlay.empty()) lit = harness::load_literature(overlay);
  harness::write_text(dir / "summary.csv", harness::summary_csv(report, lit));

  out << "acquisition (" << harness::to_string(def) << "):";
  for (double v : report.acquisition) out << " " << v;
  out << "\nmean test accuracy " << report.mean_test_accuracy << " (std " << report.std_test_accuracy << ")\n";
  out << "wrote acquisition.csv, per_task.csv, metrics.json, summary.csv to " << out_dir << "\n";
  return kExitOk;
}

struct AnalyzeOptions {
  std::vector<std::string> logs;
  std::string fixture;
  std::string corpus;
  std::string judge = "exact";
  std::string endpoint;
  std::string api_key_env = "INDUKT_API_KEY";
  std::string out = "out";
};

int cmd_analyze(const AnalyzeOptions& o, std::ostream& out) {
  analysis::AnalysisReport report;
  if (!o.fixture.empty()) {
    if (o.fixture != "table2") throw ConfigError("unknown fixture '" + o.fixture + "' (table2)");
    report = analysis::analyze_table(analysis::table2_fixture(), "fixture:table2");
  } else {
    analysis::JudgeConfig jc;
    if (o.judge == "exact") {
      jc.mode = analysis::JudgeMode::Exact;
    } else if (o.judge == "normalized") {
      jc.mode = analysis::JudgeMode::Normalized;
    } else if (o.judge == "synthetic") {
      jc.mode = analysis::JudgeMode::Provider;
      jc.provider = std::make_shared<providers::SyntheticProvider>(providers::SyntheticConfig{});
    } else if (o.judge == "live") {
      jc.mode = analysis::JudgeMode::Provider;
      jc.provider = make_live(o.endpoint, o.api_key_env, false);
    } else {
      throw ConfigError("unknown judge '" + o.judge + "' (exact | normalized | synthetic | live)");
    }
    if (o.corpus.empty()) throw ConfigError("--corpus is required to judge run logs");
    corpus::Corpus c;
    try {
      c = corpus::load_corpus(o.corpus);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("corpus: ") + e.what());
    }
    const auto logs = read_logs(o.logs);
    analysis::Judge judge(jc);
    report = analysis::analyze_logs(logs, c, judge);
  }
  fs::create_directories(o.out);
  const fs::path dir(o.out);
  harness::write_text(dir / "analysis.json", analysis::to_json(report).dump(2) + "\n");
  harness::write_text(dir / "table2.csv", analysis::table2_csv(report.table));
  harness::write_text(dir / "table3.csv", analysis::table3_csv(report));

  const auto& r = report.rates;
  out << "total " << r.total << " (cells sum to " << r.cell_sum << ")\n"
      << "overall test rate " << r.overall_test_rate << "\n"
      << "rescued " << r.rescued << " = " << r.rescue_rate_total << " of total, " << r.rescue_rate_double_failures
      << " of " << r.double_failures << " double failures\n"
      << "P(test | G ok, S fail) " << r.p_test_given_g_ok_s_fail << "\n"
      << "P(test | G ok, S ok) " << r.p_test_given_both_ok << "\n"
      << "odds ratio train " << report.odds_train.value << ", test " << report.odds_test.value << "\n"
      << "structural zero " << (report.structural_zero ? "holds" : "does not hold") << "\n";
  for (const auto& n : report.notes) out << "note: " << n << "\n";
  out << "wrote analysis.json, table2.csv, table3.csv to " << o.out << "\n";
  return kExitOk;
}

}  // namespace

json snapshot(const RunConfig& c) {
  return {{"corpus", c.corpus},
          {"mode", c.mode},
          {"provider", c.provider},
          {"endpoint", c.endpoint},
          {"api_key_env", c.api_key_env},
          {"multi_sample", c.multi_sample},
          {"model", c.model},
          {"max_tokens", c.max_tokens},
          {"generator_temperature", c.generator_temperature},
          {"implementor_temperature", c.implementor_temperature},
          {"p_gen", c.p_gen},
          {"p_impl", c.p_impl},
          {"p_rescue", c.p_rescue},
          {"p_retain", c.p_retain},
          {"p_direct", c.p_direct},
          {"executor", c.executor},
          {"step_budget", c.step_budget},
          {"wall_clock_ms", c.wall_clock_ms},
          {"memory_mib", c.memory_mib},
          {"sandbox_command", join_words(c.sandbox_command)},
          {"budget_accounting", c.budget_accounting},
          {"prompts_dir", c.prompts_dir},
          {"seed", c.seed},
          {"runs", c.runs}};
}

RunConfig from_snapshot(const json& j) {
  RunConfig c;
  try {
    c.corpus = j.at("corpus").get<std::string>();
    c.mode = j.at("mode").get<std::string>();
    c.provider = j.at("provider").get<std::string>();
    c.endpoint = j.at("endpoint").get<std::string>();
    c.api_key_env = j.at("api_key_env").get<std::string>();
    c.multi_sample = j.at("multi_sample").get<bool>();
    c.model = j.at("model").get<std::string>();
    c.max_tokens = j.at("max_tokens").get<int>();
    c.generator_temperature = j.at("generator_temperature").get<double>();
    c.implementor_temperature = j.at("implementor_temperature").get<double>();
    c.p_gen = j.at("p_gen").get<double>();
    c.p_impl = j.at("p_impl").get<double>();
    c.p_rescue = j.at("p_rescue").get<double>();
    c.p_retain = j.at("p_retain").get<double>();
    c.p_direct = j.at("p_direct").get<double>();
    c.executor = j.at("executor").get<std::string>();
    c.step_budget = j.at("step_budget").get<std::size_t>();
    c.wall_clock_ms = j.at("wall_clock_ms").get<int>();
    c.memory_mib = j.at("memory_mib").get<std::size_t>();
    c.sandbox_command = split_words(j.at("sandbox_command").get<std::string>());
    c.budget_accounting = j.at("budget_accounting").get<std::string>();
    c.prompts_dir = j.at("prompts_dir").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.runs = j.at("runs").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config snapshot incomplete: ") + e.what());
  }
  return c;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hypothesis-search rule induction experiments"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  RunConfig config;
  std::string sandbox_command;
  std::string config_file;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment and write run logs");
  add_run_options(run_cmd, config, sandbox_command);
  run_cmd->add_flag("--record", config.record, "Write transcript.ndjson for replay");
  run_cmd->add_option("--config", config_file, "Flat key = value config file");

  RunConfig replay_config;
  std::string replay_sandbox;
  std::string replay_config_file;
  std::string transcript;
  std::string from_log;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run from a recorded transcript");
  add_run_options(replay_cmd, replay_config, replay_sandbox);
  replay_cmd->add_option("--transcript", transcript, "transcript.ndjson from a recorded run");
  replay_cmd->add_option("--from-log", from_log, "Take the configuration from a run log header");
  replay_cmd->add_option("--config", replay_config_file, "Flat key = value config file");

  std::vector<std::string> metric_logs;
  std::string definition = "cumulative";
  std::string overlay;
  std::string metrics_out = "out";
  auto* metrics_cmd = app.add_subcommand("metrics", "Acquisition curve and mean test accuracy");
  metrics_cmd->add_option("logs", metric_logs, "Run log files")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  metrics_cmd->add_option("--definition", definition, "cumulative | per-trial");
  metrics_cmd->add_option("--overlay", overlay, "Literature constants JSON");
  metrics_cmd->add_option("--out", metrics_out, "Output directory");

  AnalyzeOptions analyze;
  auto* analyze_cmd = app.add_subcommand("analyze", "Module error analysis");
  analyze_cmd->add_option("logs", analyze.logs, "Run log files")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  analyze_cmd->add_option("--fixture", analyze.fixture, "Analyze a bundled table instead of logs (table2)");
  analyze_cmd->add_option("--corpus", analyze.corpus, "Corpus holding the ground-truth descriptions");
  analyze_cmd->add_option("--judge", analyze.judge, "exact | normalized | synthetic | live");
  analyze_cmd->add_option("--endpoint", analyze.endpoint, "Evaluator endpoint (live judge)");
  analyze_cmd->add_option("--api-key-env", analyze.api_key_env);
  analyze_cmd->add_option("--out", analyze.out, "Output directory");

  // Config file values go in front of the command-line flags so that the
  // flags win under TakeLast.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    for (std::size_t i = 0; i < args.size(); ++i) {
      std::string file;
      if (args[i] == "--config" && i + 1 < args.size()) {
        file = args[i + 1];
      } else if (args[i].rfind("--config=", 0) == 0) {
        file = args[i].substr(9);
      } else {
        continue;
      }
      const auto extra = config_file_args(file);
      const auto sub = std::find_if(args.begin(), args.end(),
                                    [](const std::string& a) { return a == "run" || a == "replay"; });
      if (sub != args.end()) args.insert(sub + 1, extra.begin(), extra.end());
      break;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run_cmd->parsed()) {
      config.sandbox_command = split_words(sandbox_command);
      return cmd_run(config, out, err);
    }
    if (replay_cmd->parsed()) {
      replay_config.sandbox_command = split_words(replay_sandbox);
      return cmd_replay(replay_config, transcript, from_log, out, err);
    }
    if (metrics_cmd->parsed()) return cmd_metrics(metric_logs, definition, overlay, metrics_out, out);
    if (analyze_cmd->parsed()) return cmd_analyze(analyze, out);
  } catch (const providers::ReplayMiss& e) {
    err << "error: " << e.what() << "\n";
    return kExitReplayMiss;
  } catch (const providers::CredentialMissing& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const harness::IncompatibleLogs& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const harness::LogFormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const exec::SandboxUnavailable& e) {
    err << "error: sandbox unavailable: " << e.what() << "\n";
    return kExitInfrastructure;
  } catch (const providers::ProviderError& e) {
    err << "error: provider: " << e.what() << "\n";
    return kExitInfrastructure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace indukt::cli
