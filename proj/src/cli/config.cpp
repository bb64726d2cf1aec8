#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fexp/cli.hpp"
#include "fexp/density.hpp"
#include "fexp/simulate.hpp"

namespace fexp::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ConfigError("bad value for '" + key + "': '" + text + "'");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) throw ConfigError("non-finite value for '" + key + "'");
  }
  return v;
}

std::size_t parse_count(const std::string& key, const std::string& text) {
  if (!text.empty() && text[0] == '-') throw ConfigError("'" + key + "' must be positive");
  // Accept 1e4-style counts.
  const double d = parse_number<double>(key, text);
  if (d < 1.0 || d != std::floor(d) || d > 1e12) throw ConfigError("'" + key + "' must be a positive integer");
  return static_cast<std::size_t>(d);
}

}  // namespace

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::kBrownianReversal: return "brownian-reversal";
    case Scenario::kDiffusionReversal: return "diffusion-reversal";
    case Scenario::kNoisyTerminal: return "noisy-terminal";
    case Scenario::kPointProcess: return "point-process";
    case Scenario::kWeakConvergence: return "weak-convergence";
    case Scenario::kStoppingTime: return "stopping-time";
  }
  return "brownian-reversal";
}

Scenario parse_scenario(const std::string& name) {
  for (auto s : {Scenario::kBrownianReversal, Scenario::kDiffusionReversal, Scenario::kNoisyTerminal,
                 Scenario::kPointProcess, Scenario::kWeakConvergence, Scenario::kStoppingTime}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown scenario '" + name + "'");
}

void set_config_value(ScenarioConfig& cfg, const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "scenario") {
    cfg.scenario = parse_scenario(value);
  } else if (key == "paths") {
    cfg.paths = parse_count(key, value);
  } else if (key == "grid_steps") {
    cfg.grid_steps = parse_count(key, value);
  } else if (key == "levels") {
    std::vector<int> levels;
    for (const auto& item : split_list(value)) levels.push_back(parse_number<int>(key, item));
    if (levels.empty()) throw ConfigError("'levels' must list at least one level");
    cfg.levels = levels;
  } else if (key == "seed") {
    cfg.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "t_max") {
    cfg.t_max = parse_number<double>(key, value);
  } else if (key == "horizon") {
    cfg.horizon = parse_number<double>(key, value);
  } else if (key == "sde") {
    cfg.sde = value;
  } else if (key == "out") {
    if (value.empty()) throw ConfigError("'out' must not be empty");
    cfg.out = value;
  } else if (key == "workers") {
    cfg.workers = value == "0" ? 0 : parse_count(key, value);
  } else if (key == "alpha") {
    cfg.alpha = parse_number<double>(key, value);
  } else if (key == "eta") {
    cfg.eta = parse_number<double>(key, value);
  } else if (key == "tail_eta") {
    cfg.tail_eta = parse_number<double>(key, value);
  } else if (key == "lag_steps") {
    cfg.lag_steps = parse_count(key, value);
  } else if (key == "noise_precisions") {
    cfg.noise_precisions.clear();
    for (const auto& item : split_list(value)) cfg.noise_precisions.push_back(parse_number<double>(key, item));
  } else if (key == "truncations") {
    cfg.truncations.clear();
    for (const auto& item : split_list(value)) cfg.truncations.push_back(parse_count(key, item));
  } else if (key == "max_index") {
    cfg.max_index = parse_count(key, value);
  } else if (key == "h_variant") {
    cfg.h_variant = value;
  } else if (key == "inner_samples") {
    cfg.inner_samples = parse_count(key, value);
  } else if (key == "bridge_steps") {
    cfg.bridge_steps = parse_count(key, value);
  } else if (key == "knn_k") {
    cfg.knn_k = value == "0" ? 0 : parse_count(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

ScenarioConfig parse_config_text(const std::string& text, const std::string& origin) {
  ScenarioConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

ScenarioConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

void ScenarioConfig::resolve() {
  const bool reversal = scenario == Scenario::kBrownianReversal || scenario == Scenario::kDiffusionReversal;
  if (!paths) {
    paths = scenario == Scenario::kDiffusionReversal ? 2000 : scenario == Scenario::kStoppingTime ? 4000 : 10000;
  }
  if (!t_max) {
    t_max = reversal ? 0.4 : (scenario == Scenario::kNoisyTerminal ? 0.9 : horizon);
  }
  if (!levels) {
    if (scenario == Scenario::kWeakConvergence || scenario == Scenario::kStoppingTime) {
      levels = std::vector<int>{1, 2, 3, 4, 5};
    } else if (scenario == Scenario::kDiffusionReversal) {
      levels = std::vector<int>{2, 3, 4, 5};
    } else {
      levels = std::vector<int>{2, 3, 4, 5, 6};
    }
  }
  if (!sde) sde = scenario == Scenario::kDiffusionReversal ? "ou" : "brownian";
  if (!inner_samples) inner_samples = 128;
  if (!bridge_steps) bridge_steps = 16;
  // The automatic k blurs the 0/1 first-passage indicators near the level.
  if (!knn_k) knn_k = scenario == Scenario::kStoppingTime ? 5 : 0;

  if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (!(*t_max > 0.0)) throw ConfigError("t_max must be positive");
  if (reversal && !(*t_max < horizon / 2.0)) {
    throw ConfigError("t_max must lie strictly below horizon/2 for reversal scenarios");
  }
  if (*t_max > horizon) throw ConfigError("t_max exceeds the horizon");
  if (scenario == Scenario::kNoisyTerminal && !(*t_max < horizon)) {
    throw ConfigError("t_max must lie strictly below the horizon for noisy-terminal");
  }
  if (grid_steps < 2) throw ConfigError("grid_steps must be at least 2");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(eta > 0.0)) throw ConfigError("eta must be positive");
  if (!(tail_eta > 0.0)) throw ConfigError("tail_eta must be positive");
  for (int l : *levels) {
    if (l < 0 || l > 20) throw ConfigError("levels must lie in 0..20");
  }
  if (noise_precisions.empty()) throw ConfigError("noise_precisions must not be empty");
  for (double n : noise_precisions) {
    if (!(n > 0.0)) throw ConfigError("noise precisions must be positive");
  }
  if (truncations.empty()) throw ConfigError("truncations must not be empty");
  try {
    (void)coefficients_preset(*sde);
  } catch (const std::exception&) {
    throw ConfigError("unknown SDE preset '" + *sde + "' (brownian, ou, bounded-sigmoid-drift)");
  }
  try {
    (void)parse_h_variant(h_variant);
  } catch (const std::exception&) {
    throw ConfigError("unknown h_variant '" + h_variant + "' (standard, as-printed)");
  }
  if (*inner_samples < 100) throw ConfigError("inner_samples must be at least 100");
}

nlohmann::json config_to_json(const ScenarioConfig& cfg) {
  nlohmann::json j;
  j["scenario"] = to_string(cfg.scenario);
  j["paths"] = cfg.paths.value_or(0);
  j["grid_steps"] = cfg.grid_steps;
  j["levels"] = cfg.levels.value_or(std::vector<int>{});
  j["seed"] = cfg.seed;
  j["t_max"] = cfg.t_max.value_or(0.0);
  j["horizon"] = cfg.horizon;
  j["sde"] = cfg.sde.value_or("");
  j["out"] = cfg.out;
  j["workers"] = cfg.workers;
  j["alpha"] = cfg.alpha;
  j["eta"] = cfg.eta;
  j["tail_eta"] = cfg.tail_eta;
  j["lag_steps"] = cfg.lag_steps;
  j["noise_precisions"] = cfg.noise_precisions;
  j["truncations"] = cfg.truncations;
  j["max_index"] = cfg.max_index;
  j["h_variant"] = cfg.h_variant;
  j["inner_samples"] = cfg.inner_samples.value_or(0);
  j["bridge_steps"] = cfg.bridge_steps.value_or(0);
  j["knn_k"] = cfg.knn_k.value_or(0);
  return j;
}

}  // namespace fexp::cli
