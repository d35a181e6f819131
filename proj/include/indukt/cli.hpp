#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace indukt::cli {

// Exit codes are part of the public contract.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInfrastructure = 3;
inline constexpr int kExitReplayMiss = 4;

struct RunConfig {
  std::string corpus;
  std::string mode = "hypothesis-search";
  std::string provider = "synthetic";  // synthetic | live
  std::string endpoint;
  std::string api_key_env = "INDUKT_API_KEY";
  bool multi_sample = true;
  std::string model = "gpt-4o";
  int max_tokens = 1000;
  double generator_temperature = 1.0;
  double implementor_temperature = 0.7;
  double p_gen = 1.0;
  double p_impl = 1.0;
  double p_rescue = 0.0;
  double p_retain = 1.0;
  double p_direct = 1.0;
  std::string executor = "builtin_dsl";
  std::size_t step_budget = 10000;
  int wall_clock_ms = 2000;
  std::size_t memory_mib = 256;
  std::vector<std::string> sandbox_command;
  std::string budget_accounting = "paper";
  std::string prompts_dir;
  std::uint64_t seed = 0;
  int runs = 5;
  // Transport and placement; left out of the snapshot.
  std::string out = "out";
  std::size_t workers = 1;
  bool record = false;
};

/// Everything that determines the outcomes of a run.
nlohmann::json snapshot(const RunConfig& config);
RunConfig from_snapshot(const nlohmann::json& j);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace indukt::cli
