#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace fexp::cli {

/// Bad config file, unknown key or scenario, out-of-range value. Exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scenario {
  kBrownianReversal,
  kDiffusionReversal,
  kNoisyTerminal,
  kPointProcess,
  kWeakConvergence,
  kStoppingTime,
};

std::string to_string(Scenario s);
Scenario parse_scenario(const std::string& name);

/// Every field has a documented default; unset optionals take a
/// scenario-dependent default in resolve().
struct ScenarioConfig {
  Scenario scenario = Scenario::kBrownianReversal;
  std::optional<std::size_t> paths;
  std::size_t grid_steps = 1024;
  std::optional<std::vector<int>> levels;
  std::uint64_t seed = 42;
  std::optional<double> t_max;
  double horizon = 1.0;
  std::optional<std::string> sde;
  std::string out = "out";
  std::size_t workers = 0;
  double alpha = 0.01;
  double eta = 0.1;
  /// Threshold for the point-process exceedance probability.
  double tail_eta = 0.5;
  std::size_t lag_steps = 16;
  std::vector<double> noise_precisions{4.0, 64.0, 10000.0};
  std::vector<std::size_t> truncations{5, 10, 20};
  std::size_t max_index = 4096;
  std::string h_variant = "standard";
  std::optional<std::size_t> inner_samples;
  std::optional<std::size_t> bridge_steps;
  /// kNN neighbour count for the stopping-time regressions; 0 means automatic.
  std::optional<std::size_t> knn_k;

  /// Fills scenario defaults and checks ranges; throws ConfigError.
  void resolve();
};

/// Flat `key = value` text; `#` starts a comment. Lists are comma-separated.
ScenarioConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
ScenarioConfig load_config_file(const std::string& path);
/// Applies one key/value to `cfg`; also used for command-line overrides.
void set_config_value(ScenarioConfig& cfg, const std::string& key, const std::string& value);

nlohmann::json config_to_json(const ScenarioConfig& cfg);

struct RunOutcome {
  int exit_code = 0;
  nlohmann::json report;
  std::vector<std::string> artifacts;
};

/// Runs the configured scenario and writes report.json, compensator.csv,
/// mgtest.csv, convergence.csv and figures/*.svg into cfg.out. Expects a
/// resolved config. Numerical failures are reported with exit code 1.
RunOutcome run_scenario(const ScenarioConfig& cfg);

/// Command-line entry point: parses flags, runs, prints a summary.
int main_entry(int argc, char** argv);

}  // namespace fexp::cli
