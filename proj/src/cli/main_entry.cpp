#include <iostream>

#include <CLI11.hpp>

#include "fexp/cli.hpp"

namespace fexp::cli {

int main_entry(int argc, char** argv) {
  CLI::App app{"Filtration expansion experiments: compensators, martingale tests, convergence diagnostics"};
  std::string config_path, scenario, levels, out;
  std::optional<std::string> paths, seed, t_max, workers;
  app.add_option("--config", config_path, "flat key = value config file");
  app.add_option("--scenario", scenario,
                 "brownian-reversal | diffusion-reversal | noisy-terminal | point-process | "
                 "weak-convergence | stopping-time");
  app.add_option("--paths", paths, "path count");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--levels", levels, "comma-separated subdivision levels");
  app.add_option("--out", out, "output directory");
  app.add_option("--t-max", t_max, "enlargement cutoff");
  app.add_option("--workers", workers, "worker threads (0 = all cores)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  ScenarioConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_config_file(config_path);
    if (!scenario.empty()) set_config_value(cfg, "scenario", scenario);
    if (paths) set_config_value(cfg, "paths", *paths);
    if (seed) set_config_value(cfg, "seed", *seed);
    if (!levels.empty()) set_config_value(cfg, "levels", levels);
    if (!out.empty()) set_config_value(cfg, "out", out);
    if (t_max) set_config_value(cfg, "t_max", *t_max);
    if (workers) set_config_value(cfg, "workers", *workers);
    cfg.resolve();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  RunOutcome outcome;
  try {
    outcome = run_scenario(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  std::cout << "scenario " << to_string(cfg.scenario) << ": " << outcome.report["status"].get<std::string>() << '\n';
  for (const auto& c : outcome.report["checks"]) {
    std::cout << "  [" << (c["pass"].get<bool>() ? "PASS" : "FAIL") << "] " << c["name"].get<std::string>();
    const auto detail = c["detail"].get<std::string>();
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << '\n';
  }
  if (!outcome.report["error"].is_null()) {
    std::cerr << "failed in stage '" << outcome.report["error"]["stage"].get<std::string>()
              << "': " << outcome.report["error"]["message"].get<std::string>() << '\n';
  }
  std::cout << "report: " << cfg.out << "/report.json\n";
  return outcome.exit_code;
}

}  // namespace fexp::cli
