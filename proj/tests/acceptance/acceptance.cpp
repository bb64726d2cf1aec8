// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fexp/cli.hpp"
#include "fexp/converge.hpp"
#include "fexp/density.hpp"
#include "fexp/expand.hpp"
#include "fexp/mgtest.hpp"
#include "fexp/simulate.hpp"
#include "fexp/stats.hpp"

using namespace fexp;
namespace fs = std::filesystem;

namespace {

const double kTwoRootTwoOverPi = 2.0 * std::sqrt(2.0 / std::numbers::pi);

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<double> lagged_times(double window, std::size_t lag_steps, const TimeGrid& g) {
  const double lag = static_cast<double>(lag_steps) * g.step(0);
  std::vector<double> out;
  for (int i = 1; i <= 16; ++i) {
    const double t = window * i / 8.0;
    if (t + lag > window + 1e-12) break;
    out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------

Outcome brownian_decomposition() {
  const double t_max = 0.4;
  const auto g = make_uniform_grid(1.0, 1024);
  const auto b = simulate_brownian(g, RngContract{42}, 10000);
  const auto z = reverse_ensemble(b);
  const auto score = gaussian_score_function();
  const auto comp = subtract_compensator(
      b, [&](std::size_t, const Path& p) { return compensator_limit(p, score, t_max); });
  const auto raw = subtract_compensator(b, [&](std::size_t, const Path&) {
    const std::size_t n = g.index_at_or_below(t_max) + 1;
    return CompensatorResult{Path(grid_prefix(g, n), std::vector<double>(n, 0.0)), {}, 0.0, kLimitLevel};
  });
  const auto times = lagged_times(t_max, kDefaultLagSteps, g);
  const auto specs = make_lagged_specs("B and reversal", {&b, &z}, {"B", "Z"}, times);
  const auto fixed = increment_orthogonality_test(comp.martingale, specs, times, 0.01, t_max);
  const auto unfixed = increment_orthogonality_test(raw.martingale, specs, times, 0.01, t_max);
  const auto qv = qv_test(comp.martingale, t_max, 0.02);
  return {fixed.pass && !unfixed.pass && qv.pass,
          std::string("B - A ") + (fixed.pass ? "passes" : "rejected") + ", raw B " +
              (unfixed.pass ? "passes" : "rejected") + ", mean QV " + num(qv.rows[0].statistic)};
}

Outcome compensator_convergence() {
  const double t_max = 0.4;
  const auto g = make_uniform_grid(1.0, 1024);
  const auto b = simulate_brownian(g, RngContract{42}, 100);
  const auto score = gaussian_score_function();
  std::vector<Path> limits;
  for (std::size_t p = 0; p < b.path_count(); ++p) limits.push_back(compensator_limit(b.path(p), score, t_max).trajectory);
  std::vector<double> sup;
  for (int level = 2; level <= 6; ++level) {
    const auto pi = make_dyadic_subdivision(level, t_max);
    std::vector<double> d(b.path_count());
    for (std::size_t p = 0; p < d.size(); ++p) d[p] = sup_distance(compensator_An(b.path(p), pi, score, t_max).trajectory, limits[p]);
    sup.push_back(summarize(d).mean);
  }
  std::vector<double> ratios;
  for (std::size_t i = 0; i + 1 < sup.size(); ++i) ratios.push_back(sup[i + 1] / sup[i]);
  std::sort(ratios.begin(), ratios.end());
  const double med = 0.5 * (ratios[1] + ratios[2]);
  std::string detail = "sup distances";
  for (double s : sup) detail += " " + num(s);
  return {med < 0.9, detail + "; median ratio " + num(med)};
}

Outcome phi_bound() {
  const double t_max = 0.4;
  const auto g = make_uniform_grid(1.0, 1024);
  const auto b = simulate_brownian(g, RngContract{42}, 10000);
  const auto score = gaussian_score_function();
  bool ok = true;
  std::string detail = "phi z-scores";
  for (double lag : {0.05, 0.1, 0.25}) {
    const auto e = estimate_phi(score, b, 0.1, 0.1 + lag);
    const double expect = std::sqrt(2.0 / std::numbers::pi) / std::sqrt(lag);
    const double zscore = (e.mean - expect) / e.std_error;
    ok = ok && std::abs(zscore) <= 3.0;
    detail += " " + num(zscore);
  }
  std::vector<Subdivision> subs;
  for (int level = 2; level <= 6; ++level) subs.push_back(make_dyadic_subdivision(level, t_max));
  const auto tv = integrability_diagnostic(b, subs, score, t_max);
  std::vector<double> lv, means;
  detail += "; TV";
  for (const auto& e : tv) {
    ok = ok && e.mean <= kTwoRootTwoOverPi + 3.0 * e.std_error;
    lv.push_back(e.level);
    means.push_back(e.mean);
    detail += " " + num(e.mean);
  }
  const auto trend = linear_trend_test(lv, means);
  ok = ok && trend.p_upward > 0.01;
  return {ok, detail + "; upward-trend p " + num(trend.p_upward)};
}

Outcome bridge_identity() {
  const auto g = make_uniform_grid(1.0, 1024);
  const auto b = simulate_brownian(g, RngContract{42}, 10000);
  const auto n = static_cast<Eigen::Index>(b.path_count());
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index p = 0; p < n; ++p) {
    const auto pp = static_cast<std::size_t>(p);
    x(p, 0) = 1.0;
    x(p, 1) = b.value_at(pp, 0.2);
    x(p, 2) = b.value_at(pp, 0.8);
    y(p) = b.value_at(pp, 0.5);
  }
  const auto fit = ordinary_least_squares(x, y);
  const auto& c = fit.coefficients;
  const bool ok = std::abs(c(0)) <= 0.02 && std::abs(c(1) - 0.5) <= 0.02 && std::abs(c(2) - 0.5) <= 0.02;
  return {ok, "intercept " + num(c(0)) + ", coefficients " + num(c(1)) + " " + num(c(2))};
}

double ou_density(double t, double x, double y) {
  const double m = x * std::exp(-t);
  const double v = 0.5 * (1.0 - std::exp(-2.0 * t));
  return std::exp(-(y - m) * (y - m) / (2.0 * v)) / std::sqrt(2.0 * std::numbers::pi * v);
}

Outcome zmirou_density_check() {
  bool identical = true;
  const auto bm = brownian_coefficients();
  for (double t : {0.1, 0.5, 1.0}) {
    for (double y : {-0.7, 0.0, 1.3}) {
      const auto d = zmirou_density(bm, t, 0.2, y, ZmirouConfig{}, RngContract{42});
      identical = identical && d.value == gaussian_density(t, 0.2, y);
    }
  }
  const auto ou = ou_coefficients();
  std::vector<std::string> matching;
  for (auto variant : {HVariant::kStandard, HVariant::kAsPrinted}) {
    ZmirouConfig cfg;
    cfg.inner_samples = 10000;
    cfg.h_variant = variant;
    const ZmirouModel model(ou, cfg, RngContract{42});
    bool all = true;
    for (double t : {0.25, 0.5}) {
      for (double y : {0.0, 0.3}) {
        const auto d = model.density(t, 0.0, y);
        all = all && std::abs(d.value - ou_density(t, 0.0, y)) <= 3.0 * d.std_error;
      }
    }
    if (all) matching.push_back(to_string(variant));
  }
  std::string m = matching.empty() ? "none" : matching.front();
  for (std::size_t i = 1; i < matching.size(); ++i) m += ", " + matching[i];
  return {identical && !matching.empty(),
          std::string("Brownian kernel ") + (identical ? "bit-identical" : "differs") + "; OU matching variants: " + m};
}

// Runs a scenario with its defaults and reports its checks.
Outcome scenario(cli::Scenario s, const fs::path& root) {
  cli::ScenarioConfig cfg;
  cfg.scenario = s;
  cfg.out = (root / cli::to_string(s)).string();
  cfg.resolve();
  const auto r = cli::run_scenario(cfg);
  std::string detail;
  for (const auto& c : r.report["checks"]) {
    if (!c["pass"].get<bool>()) detail += "failed: " + c["name"].get<std::string>() + " (" + c["detail"].get<std::string>() + "); ";
  }
  if (!r.report["error"].is_null()) detail += "error: " + r.report["error"]["message"].get<std::string>() + "; ";
  if (detail.empty()) detail = std::to_string(r.report["checks"].size()) + " scenario checks passed";
  return {r.exit_code == 0, detail};
}

Outcome null_calibration() {
  const double alpha = 0.05;
  const double window = 0.4;
  const auto g = make_uniform_grid(1.0, 1024);
  const auto times = lagged_times(window, kDefaultLagSteps, g);
  std::size_t rejections = 0;
  const std::size_t seeds = 100;
  for (std::size_t seed = 1; seed <= seeds; ++seed) {
    const auto b = simulate_brownian(g, RngContract{1000 + seed}, 2000);
    const auto specs = make_lagged_specs("own past", {&b}, {"B"}, times);
    if (!increment_orthogonality_test(b, specs, times, alpha, window).pass) ++rejections;
  }
  const double rate = static_cast<double>(rejections) / static_cast<double>(seeds);
  return {rate >= alpha / 3.0 && rate <= 3.0 * alpha, "rejection rate " + num(rate) + " over 100 seeds"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome reproducibility(const fs::path& root) {
  bool same = true;
  std::string detail;
  for (auto s : {cli::Scenario::kBrownianReversal, cli::Scenario::kPointProcess, cli::Scenario::kStoppingTime}) {
    std::vector<std::string> outs;
    for (std::size_t workers : {1u, 4u, 1u}) {
      cli::ScenarioConfig cfg;
      cfg.scenario = s;
      cfg.paths = 2000;
      cfg.levels = std::vector<int>{3, 4};
      cfg.max_index = 512;
      cfg.workers = workers;
      cfg.out = (root / ("repro_" + cli::to_string(s) + "_" + std::to_string(outs.size()))).string();
      cfg.resolve();
      cli::run_scenario(cfg);
      std::string all;
      for (const char* f : {"compensator.csv", "mgtest.csv", "convergence.csv"}) all += slurp(fs::path(cfg.out) / f);
      outs.push_back(all);
    }
    const bool ok = !outs[0].empty() && outs[0] == outs[1] && outs[0] == outs[2];
    same = same && ok;
    detail += cli::to_string(s) + (ok ? " identical; " : " DIFFERS; ");
  }
  set_worker_count(0);
  return {same, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "fexp_acceptance";
  fs::create_directories(root);

  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"AC1 Brownian reversal decomposition", brownian_decomposition},
      {"AC2 compensator convergence", compensator_convergence},
      {"AC3 phi bound and integrability", phi_bound},
      {"AC4 bridge identity", bridge_identity},
      {"AC5 Zmirou density", zmirou_density_check},
      {"AC6 noisy-terminal expansion", [&] { return scenario(cli::Scenario::kNoisyTerminal, root); }},
      {"AC7 point-process tail bound", [&] { return scenario(cli::Scenario::kPointProcess, root); }},
      {"AC8 weak convergence", [&] { return scenario(cli::Scenario::kWeakConvergence, root); }},
      {"AC9 stopping-time approximation", [&] { return scenario(cli::Scenario::kStoppingTime, root); }},
      {"AC10 null calibration", null_calibration},
      {"AC11 reproducibility", [&] { return reproducibility(root); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto started = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::printf("[%s] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
