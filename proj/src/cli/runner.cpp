#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numbers>

#include "fexp/cli.hpp"
#include "fexp/converge.hpp"
#include "fexp/density.hpp"
#include "fexp/errors.hpp"
#include "fexp/expand.hpp"
#include "fexp/mgtest.hpp"
#include "fexp/simulate.hpp"
#include "fexp/stats.hpp"
#include "output.hpp"

namespace fexp::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

const double kPhiBound = 2.0 * std::sqrt(2.0 / std::numbers::pi);

struct Run {
  explicit Run(const ScenarioConfig& c) : cfg(c) {}

  const ScenarioConfig& cfg;
  std::vector<CompensatorRow> compensator;
  std::vector<MgtestRow> mgtest;
  std::vector<ConvergenceTableRow> convergence;
  std::vector<std::pair<std::string, Figure>> figures;
  json results = json::object();
  json checks = json::array();
  json timings = json::object();
  std::string stage = "setup";
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  void begin(const std::string& name) {
    finish();
    stage = name;
    started = std::chrono::steady_clock::now();
  }
  void finish() {
    const auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    timings[stage] = timings.value(stage, 0.0) + dt;
  }
  void check(const std::string& name, bool pass, const std::string& detail) {
    checks.push_back({{"name", name}, {"pass", pass}, {"detail", detail}});
  }
};

TimeGrid make_grid(const ScenarioConfig& cfg) { return make_uniform_grid(cfg.horizon, cfg.grid_steps); }

std::vector<double> test_times(const ScenarioConfig& cfg, const TimeGrid& grid, double window) {
  const double lag = static_cast<double>(cfg.lag_steps) * grid.step(0);
  std::vector<double> out;
  for (int i = 1; i <= 16; ++i) {
    const double t = window * i / 8.0;
    if (t + lag > window + 1e-12) break;
    if (grid.index_at_or_below(t) < cfg.lag_steps) continue;
    out.push_back(t);
  }
  if (out.empty()) throw ConfigError("lag_steps leaves no test time inside the window");
  return out;
}

json report_json(const MartingaleTestReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"t", row.t}, {"statistic", row.statistic}, {"p_value", row.p_value},
                    {"p_adjusted", row.p_adjusted}});
  }
  return {{"test", r.test}, {"pass", r.pass}, {"alpha", r.alpha}, {"lag_steps", r.lag_steps},
          {"feature_label", r.feature_label}, {"dropped_columns", r.dropped_columns},
          {"mean_sup", r.mean_sup}, {"tolerance", r.tolerance}, {"rows", rows}};
}

void record_test(Run& run, const MartingaleTestReport& r, const std::string& subject, bool expect_pass,
                 json& sink) {
  for (const auto& row : r.rows) {
    run.mgtest.push_back({r.test, subject, row.t, row.statistic, row.p_value, row.p_adjusted, r.pass});
  }
  json j = report_json(r);
  j["subject"] = subject;
  j["expected"] = expect_pass ? "pass" : "fail";
  sink.push_back(j);
  run.check(r.test + " on " + subject + " (expected " + (expect_pass ? "pass" : "fail") + ")",
            r.pass == expect_pass, r.pass ? "test passed" : "test rejected");
}

void add_trajectory(Run& run, double level, const Path& a) {
  double tv = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (k > 0) tv += std::abs(a[k] - a[k - 1]);
    run.compensator.push_back({level, a.grid()[k], a[k], tv});
  }
}

Figure drift_figure(const std::vector<std::pair<std::string, const MartingaleTestReport*>>& reps,
                    double alpha) {
  Figure fig{"Drift detection", "t", "max |t-statistic|", {}, false, true, 0.0};
  std::size_t tests = 0;
  for (const auto& [name, r] : reps) {
    Series s{name, {}, {}};
    for (const auto& row : r->rows) {
      s.x.push_back(row.t);
      s.y.push_back(row.statistic);
    }
    fig.series.push_back(s);
    if (!r->rows.empty()) tests = r->rows.size() * r->rows.front().basis.size();
  }
  // Two-sided normal critical value at the Bonferroni level.
  double z = 0.0;
  const double target = alpha / static_cast<double>(std::max<std::size_t>(1, tests));
  for (double lo = 0.0, hi = 40.0; hi - lo > 1e-9;) {
    z = 0.5 * (lo + hi);
    (normal_two_sided_p(z) > target ? lo : hi) = z;
  }
  fig.reference = z;
  return fig;
}

double median_ratio(const std::vector<double>& v) {
  std::vector<double> r;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    if (v[i] > 0.0) r.push_back(v[i + 1] / v[i]);
  }
  if (r.empty()) return NAN;
  std::sort(r.begin(), r.end());
  const std::size_t m = r.size() / 2;
  return r.size() % 2 ? r[m] : 0.5 * (r[m - 1] + r[m]);
}

// Compensator levels against the limit, martingale tests for X - int b and
// X - int b - A. With no coefficients the ordinary drift is zero.
void run_reversal(Run& run, const PathEnsemble& x, const ScoreFunction& score, const SdeCoefficients* coeffs) {
  const auto& cfg = run.cfg;
  const double t_max = *cfg.t_max;
  const auto& grid = x.grid();
  const auto z = reverse_ensemble(x);

  run.begin("compensator limit");
  auto base = [&](const Path& p) {
    // Left-endpoint integral of b(X) up to t_max.
    const std::size_t k_max = grid.index_at_or_below(t_max);
    std::vector<double> a(k_max + 1, 0.0);
    if (coeffs) {
      for (std::size_t k = 0; k < k_max; ++k) a[k + 1] = a[k] + coeffs->b(p[k]) * grid.step(k);
    }
    return a;
  };
  std::vector<CompensatorResult> limits(x.path_count(), CompensatorResult{Path(grid_prefix(grid, 2), {0, 0}), {}, 0, 0});
  const auto comp = subtract_compensator(x, [&](std::size_t p, const Path& path) {
    auto r = compensator_limit(path, score, t_max);
    const auto drift = base(path);
    limits[p] = r;
    std::vector<double> total(drift.size());
    for (std::size_t k = 0; k < drift.size(); ++k) total[k] = drift[k] + r.trajectory[k];
    return CompensatorResult{Path(r.trajectory.grid(), std::move(total)), r.contributions, r.total_variation,
                             r.level};
  });
  add_trajectory(run, kLimitLevel, limits[0].trajectory);
  std::vector<double> tv_limit(x.path_count());
  for (std::size_t p = 0; p < tv_limit.size(); ++p) tv_limit[p] = limits[p].total_variation;
  const auto tvl = summarize(tv_limit);
  run.convergence.push_back({"total_variation", kLimitLevel, tvl.mean, tvl.std_error});

  run.begin("compensator levels");
  json levels = json::array();
  std::vector<double> sup_means, level_x, tv_means;
  for (int level : *cfg.levels) {
    const auto pi = make_dyadic_subdivision(level, t_max);
    std::vector<double> sup(x.path_count()), tv(x.path_count());
    parallel_for(x.path_count(), [&](std::size_t p) {
      ScoreCache cache(score);
      const auto r = compensator_An(x.path(p), pi, score, t_max, &cache);
      sup[p] = sup_distance(r.trajectory, limits[p].trajectory);
      tv[p] = r.total_variation;
    });
    add_trajectory(run, level, compensator_An(x.path(0), pi, score, t_max).trajectory);
    const auto s = summarize(sup);
    const auto v = summarize(tv);
    run.convergence.push_back({"sup_distance", static_cast<double>(level), s.mean, s.std_error});
    run.convergence.push_back({"total_variation", static_cast<double>(level), v.mean, v.std_error});
    levels.push_back({{"level", level}, {"sup_distance", s.mean}, {"sup_distance_stderr", s.std_error},
                      {"total_variation", v.mean}, {"total_variation_stderr", v.std_error}});
    sup_means.push_back(s.mean);
    tv_means.push_back(v.mean);
    level_x.push_back(level);
  }
  run.results["compensator"] = {{"levels", levels}, {"limit_total_variation", tvl.mean},
                                {"limit_total_variation_stderr", tvl.std_error}};
  if (sup_means.size() >= 2) {
    const double ratio = median_ratio(sup_means);
    run.results["compensator"]["median_successive_ratio"] = ratio;
    run.check("compensator levels approach the limit (median ratio < 0.9)", ratio < 0.9,
              "median ratio " + format_number(ratio));
  }
  if (!coeffs) {
    bool bounded = true;
    for (std::size_t i = 0; i < run.convergence.size(); ++i) {
      const auto& r = run.convergence[i];
      if (r.table == "total_variation" && r.value > kPhiBound + 3.0 * r.std_error) bounded = false;
    }
    run.check("mean total variation bounded by 2*sqrt(2/pi)", bounded, "bound " + format_number(kPhiBound));
  }
  run.figures.push_back({"compensator_convergence.svg",
                         Figure{"Compensator convergence", "dyadic level", "mean sup |A^n - A|",
                                {Series{"sup distance", level_x, sup_means}}, true, false, 0.0}});

  run.begin("martingale tests");
  const auto times = test_times(cfg, grid, t_max);
  // Raw process minus its ordinary drift.
  const auto drift_only = subtract_compensator(x, [&](std::size_t, const Path& path) {
    const auto a = base(path);
    return CompensatorResult{Path(grid_prefix(grid, a.size()), a), {}, 0.0, 0};
  });
  const auto specs = make_lagged_specs("X and its reversal", {&x, &z}, {"X", "Z"}, times, cfg.lag_steps);
  json tests = json::array();
  const auto raw = increment_orthogonality_test(drift_only.martingale, specs, times, cfg.alpha, t_max, cfg.lag_steps);
  record_test(run, raw, coeffs ? "X - int b" : "B", false, tests);
  const auto fixed = increment_orthogonality_test(comp.martingale, specs, times, cfg.alpha, t_max, cfg.lag_steps);
  record_test(run, fixed, coeffs ? "X - int b - A" : "B - A", true, tests);
  if (grid.max_step() <= std::ldexp(1.0, -10) * (1.0 + 1e-9)) {
    const auto qv = qv_test(comp.martingale, t_max, 0.02);
    const std::string subject = coeffs ? "X - int b - A" : "B - A";
    run.mgtest.push_back({qv.test, subject, qv.rows[0].t, qv.rows[0].statistic, qv.rows[0].p_value,
                          qv.rows[0].p_adjusted, qv.pass});
    json j = report_json(qv);
    j["subject"] = subject;
    j["expected"] = "pass";
    tests.push_back(j);
    run.check("quadratic variation of the compensated process within 2% of t", qv.pass,
              "mean QV " + format_number(qv.rows[0].statistic));
  } else {
    run.results["qv_skipped"] = "grid step above 2^-10";
  }
  run.results["martingale_tests"] = tests;
  run.figures.push_back({"drift_detection.svg",
                         drift_figure({{coeffs ? "X - int b" : "B", &raw}, {coeffs ? "X - int b - A" : "B - A", &fixed}},
                                      cfg.alpha)});
}

void brownian_reversal(Run& run) {
  const auto& cfg = run.cfg;
  run.begin("simulate");
  const auto grid = make_grid(cfg);
  const auto b = simulate_brownian(grid, RngContract{cfg.seed}, *cfg.paths);
  run_reversal(run, b, gaussian_score_function(), nullptr);

  run.begin("phi");
  json phi = json::array();
  const auto score = gaussian_score_function();
  for (double lag : {0.05, 0.1, 0.25}) {
    const double s = 0.1;
    const auto e = estimate_phi(score, b, s, s + lag);
    const double expect = std::sqrt(2.0 / std::numbers::pi) / std::sqrt(lag);
    phi.push_back({{"lag", lag}, {"mean", e.mean}, {"stderr", e.std_error}, {"expected", expect}});
    run.convergence.push_back({"phi", lag, e.mean, e.std_error});
  }
  run.results["phi"] = phi;
}

double ou_exact_density(double t, double x, double y) {
  const double m = x * std::exp(-t);
  const double v = 0.5 * (1.0 - std::exp(-2.0 * t));
  return std::exp(-(y - m) * (y - m) / (2.0 * v)) / std::sqrt(2.0 * std::numbers::pi * v);
}

void diffusion_reversal(Run& run) {
  const auto& cfg = run.cfg;
  run.begin("simulate");
  const auto grid = make_grid(cfg);
  const auto coeffs = coefficients_preset(*cfg.sde);
  const auto b = simulate_brownian(grid, RngContract{cfg.seed}, *cfg.paths);
  const auto x = euler_maruyama(coeffs, 0.0, b);

  run.begin("density model");
  ZmirouConfig zc;
  zc.inner_samples = *cfg.inner_samples;
  zc.bridge_steps = *cfg.bridge_steps;
  zc.h_variant = parse_h_variant(cfg.h_variant);
  const RngContract inner = RngContract{cfg.seed}.derive(1);
  auto model = std::make_shared<const ZmirouModel>(coeffs, zc, inner);
  run.results["score_model"] = {{"h_variant", cfg.h_variant}, {"inner_samples", zc.inner_samples},
                                {"bridge_steps", zc.bridge_steps}, {"sde", *cfg.sde}};

  if (*cfg.sde == "ou") {
    run.begin("density check");
    json pts = json::array();
    std::vector<std::string> matching;
    for (auto variant : {HVariant::kStandard, HVariant::kAsPrinted}) {
      ZmirouConfig dc;
      dc.h_variant = variant;
      const ZmirouModel m(coeffs, dc, inner.derive(2));
      bool all = true;
      for (double t : {0.25, 0.5}) {
        for (double y : {0.0, 0.3}) {
          const auto d = m.density(t, 0.0, y);
          const double exact = ou_exact_density(t, 0.0, y);
          const bool ok = std::abs(d.value - exact) <= 3.0 * d.std_error;
          all = all && ok;
          pts.push_back({{"h_variant", to_string(variant)}, {"t", t}, {"x", 0.0}, {"y", y}, {"estimate", d.value},
                         {"stderr", d.std_error}, {"exact", exact}, {"within_3se", ok}});
        }
      }
      if (all) matching.push_back(to_string(variant));
    }
    run.results["density_check"] = {{"points", pts}, {"matching_variants", matching}};
    run.check("some h variant matches the exact OU density within 3 SE", !matching.empty(),
              matching.empty() ? "none" : matching.front());
  }
  run_reversal(run, x, zmirou_score_function(model), &coeffs);
}

void noisy_terminal(Run& run) {
  const auto& cfg = run.cfg;
  const double t_max = *cfg.t_max;
  run.begin("simulate");
  const auto grid = make_grid(cfg);
  const auto b = simulate_brownian(grid, RngContract{cfg.seed}, *cfg.paths);

  run.begin("bridge compensator");
  const auto tau = sample_noisy_terminal(b, INFINITY);
  std::vector<Path> bridge(b.path_count(), Path(grid_prefix(grid, 2), {0, 0}));
  parallel_for(b.path_count(), [&](std::size_t p) {
    bridge[p] = noisy_terminal_compensator(b.path(p), tau[p], INFINITY, t_max).trajectory;
  });
  add_trajectory(run, kLimitLevel, bridge[0]);

  json levels = json::array();
  json tests = json::array();
  std::vector<double> sup_means, ns;
  std::vector<std::pair<std::string, MartingaleTestReport>> fig_reps;
  const auto times = test_times(cfg, grid, t_max);
  for (double n : cfg.noise_precisions) {
    run.begin("noisy compensator");
    const auto tau_n = sample_noisy_terminal(b, n);
    std::vector<double> sup(b.path_count());
    const auto comp = subtract_compensator(b, [&](std::size_t p, const Path& path) {
      auto r = noisy_terminal_compensator(path, tau_n[p], n, t_max);
      sup[p] = sup_distance(r.trajectory, bridge[p]);
      return r;
    });
    add_trajectory(run, n, comp.compensator.path(0));
    const auto s = summarize(sup);
    run.convergence.push_back({"sup_distance_to_bridge", n, s.mean, s.std_error});
    sup_means.push_back(s.mean);
    ns.push_back(n);

    run.begin("martingale tests");
    const auto specs = make_lagged_specs("B and tau_n", {&b}, {"B"}, times, cfg.lag_steps, {{"tau_n", &tau_n}});
    const auto rep = increment_orthogonality_test(comp.martingale, specs, times, cfg.alpha, t_max, cfg.lag_steps);
    record_test(run, rep, "B - A^n (n=" + format_number(n) + ")", true, tests);
    levels.push_back({{"precision", n}, {"sup_distance_to_bridge", s.mean}, {"stderr", s.std_error}});
    if (n == cfg.noise_precisions.back()) {
      const auto raw = increment_orthogonality_test(b, specs, times, cfg.alpha, t_max, cfg.lag_steps);
      record_test(run, raw, "B (n=" + format_number(n) + ")", false, tests);
      fig_reps.push_back({"B", raw});
      fig_reps.push_back({"B - A^n", rep});
    }
  }
  bool decreasing = true;
  for (std::size_t i = 0; i + 1 < sup_means.size(); ++i) {
    if (ns[i + 1] > ns[i] && !(sup_means[i + 1] < sup_means[i])) decreasing = false;
  }
  run.check("sup distance to the bridge compensator decreases in n", decreasing, "");
  run.results["noisy_terminal"] = {{"levels", levels}};
  run.results["martingale_tests"] = tests;
  std::vector<double> log_n;
  for (double n : ns) log_n.push_back(std::log10(n));
  run.figures.push_back({"compensator_convergence.svg",
                         Figure{"Noisy terminal compensator vs bridge", "log10 n", "mean sup |A^n - A|",
                                {Series{"sup distance", log_n, sup_means}}, true, false, 0.0}});
  if (!fig_reps.empty()) {
    run.figures.push_back({"drift_detection.svg",
                           drift_figure({{fig_reps[0].first, &fig_reps[0].second},
                                         {fig_reps[1].first, &fig_reps[1].second}},
                                        cfg.alpha)});
  }
}

void point_process(Run& run) {
  const auto& cfg = run.cfg;
  const auto grid = make_grid(cfg);
  json levels = json::array();
  std::vector<double> trunc_x, exceed_y, bound_y;
  for (std::size_t n : cfg.truncations) {
    run.begin("point process");
    auto spec = preset_point_process(n, cfg.max_index);
    spec.horizon = cfg.horizon;
    const auto s = truncate_point_process(spec, grid, RngContract{cfg.seed}, *cfg.paths);
    if (n == cfg.truncations.front()) add_trajectory(run, kLimitLevel, s.full.path(0));
    add_trajectory(run, static_cast<double>(n), s.truncated.path(0));
    std::vector<double> ex(s.sup_distance.size());
    for (std::size_t p = 0; p < ex.size(); ++p) ex[p] = s.sup_distance[p] >= cfg.tail_eta ? 1.0 : 0.0;
    const auto pe = summarize(ex);
    const auto sd = summarize(s.sup_distance);
    const double bound = point_process_tail_bound(spec, s, cfg.tail_eta);
    const double dn = static_cast<double>(n);
    run.convergence.push_back({"sup_distance", dn, sd.mean, sd.std_error});
    run.convergence.push_back({"exceedance", dn, pe.mean, pe.std_error});
    run.convergence.push_back({"tail_bound", dn, bound, 0.0});
    levels.push_back({{"truncation", n}, {"mean_sup_distance", sd.mean}, {"exceedance", pe.mean},
                      {"exceedance_stderr", pe.std_error}, {"tail_bound", bound},
                      {"max_realized_jumps", s.max_realized_jumps}});
    run.check("exceedance within tail bound + 3 SE at n=" + std::to_string(n),
              pe.mean <= bound + 3.0 * pe.std_error,
              format_number(pe.mean) + " vs " + format_number(bound));
    run.check("Markov inequality at n=" + std::to_string(n),
              pe.mean <= sd.mean / cfg.tail_eta + 3.0 * sd.std_error / cfg.tail_eta, "");
    trunc_x.push_back(dn);
    exceed_y.push_back(pe.mean);
    bound_y.push_back(bound);
  }
  run.results["point_process"] = {{"tail_eta", cfg.tail_eta}, {"max_index", cfg.max_index}, {"levels", levels}};
  run.figures.push_back({"compensator_convergence.svg",
                         Figure{"Point-process truncation", "truncation n", "probability",
                                {Series{"P(sup >= eta)", trunc_x, exceed_y}, Series{"tail bound", trunc_x, bound_y}},
                                false, false, 0.0}});
}

std::size_t count_up(const std::vector<ConvergenceRow>& rows) { return count_increases(rows); }

void weak_convergence(Run& run) {
  const auto& cfg = run.cfg;
  run.begin("simulate");
  const auto grid = make_grid(cfg);
  const auto b = simulate_brownian(grid, RngContract{cfg.seed}, *cfg.paths);
  const double t = 0.5 * cfg.horizon;
  const auto& lv = *cfg.levels;
  if (lv.size() < 2) throw ConfigError("weak-convergence needs at least 2 levels");

  json tables = json::object();
  Figure fig{"Weak convergence of discretized sigma-fields", "level", "d_n", {}, false, false, 0.0};
  for (double arg : {0.3125 * cfg.horizon, 0.3 * cfg.horizon}) {
    run.begin("regressions");
    std::vector<double> y(b.path_count());
    for (std::size_t p = 0; p < y.size(); ++p) y[p] = std::clamp(b.value_at(p, arg), -1.0, 1.0);
    std::vector<SigmaFieldSpec> specs;
    for (int l : lv) {
      specs.push_back(make_discretized_spec("dyadic level " + std::to_string(l), b,
                                            make_dyadic_subdivision(l, cfg.horizon), t, {arg}));
    }
    const auto rows = weak_convergence_report(y, specs, lv, cfg.eta);
    const std::string name = "d_n clamp(B_" + format_number(arg) + ")";
    json arr = json::array();
    Series s{"f = clamp(B_" + format_number(arg) + ")", {}, {}};
    for (const auto& r : rows) {
      run.convergence.push_back({name, static_cast<double>(r.level), r.distance, r.std_error});
      arr.push_back({{"level", r.level}, {"d_n", r.distance}, {"stderr", r.std_error},
                     {"cross_fitted_l1", r.cross_fitted_l1}});
      s.x.push_back(r.level);
      s.y.push_back(r.distance);
    }
    fig.series.push_back(s);
    tables[name] = arr;
    const std::size_t ups = count_up(rows);
    run.check(name + " non-increasing up to one inversion", ups <= 1, std::to_string(ups) + " increases");
    if (arg == 0.3125 * cfg.horizon) {
      run.check(name + " at the finest level <= 0.05", rows.back().distance <= 0.05,
                format_number(rows.back().distance));
    }
  }
  run.results["weak_convergence"] = {{"t", t}, {"eta", cfg.eta}, {"tables", tables}};
  run.figures.push_back({"compensator_convergence.svg", fig});
}

void stopping_time(Run& run) {
  const auto& cfg = run.cfg;
  run.begin("simulate");
  const auto grid = make_grid(cfg);
  const auto b = simulate_brownian(grid, RngContract{cfg.seed}, *cfg.paths);
  std::vector<double> times;
  for (int i = 1; i <= 16; ++i) times.push_back(cfg.horizon * i / 16.0);
  const auto tau = first_passage_times(b, times, 0.5);
  const double tol = cfg.horizon / 16.0;

  json arr = json::array();
  std::vector<double> err_y, lx;
  for (int m : *cfg.levels) {
    run.begin("regressions");
    const auto pi = make_dyadic_subdivision(m, cfg.horizon);
    std::vector<SigmaFieldSpec> specs;
    for (double t : times) specs.push_back(make_running_max_spec("level " + std::to_string(m), b, pi, t, times));
    RegressionConfig rc;
    rc.k = *cfg.knn_k;
    const auto tau_m = approximate_stopping_time(tau, times, specs, rc);
    std::vector<double> miss(tau.size());
    for (std::size_t p = 0; p < miss.size(); ++p) miss[p] = std::abs(tau_m[p] - tau[p]) > tol + 1e-12 ? 1.0 : 0.0;
    const auto e = summarize(miss);
    run.convergence.push_back({"stopping_error", static_cast<double>(m), e.mean, e.std_error});
    arr.push_back({{"level", m}, {"error", e.mean}, {"stderr", e.std_error}});
    err_y.push_back(e.mean);
    lx.push_back(m);
  }
  const std::size_t ups = count_inversions(err_y);
  run.check("stopping-time error non-increasing up to one inversion", ups <= 1, std::to_string(ups) + " increases");
  run.check("stopping-time error at the finest level < 0.1", err_y.back() < 0.1, format_number(err_y.back()));
  run.results["stopping_time"] = {{"threshold", 0.5}, {"knn_k", *cfg.knn_k}, {"levels", arr}};
  run.figures.push_back({"compensator_convergence.svg",
                         Figure{"Stopping-time approximation", "feature level", "P(|tau_m - tau| > 1/16)",
                                {Series{"error", lx, err_y}}, false, false, 0.0}});
}

}  // namespace

RunOutcome run_scenario(const ScenarioConfig& cfg) {
  set_worker_count(cfg.workers);
  Run run(cfg);
  RunOutcome outcome;
  json error = nullptr;
  try {
    switch (cfg.scenario) {
      case Scenario::kBrownianReversal: brownian_reversal(run); break;
      case Scenario::kDiffusionReversal: diffusion_reversal(run); break;
      case Scenario::kNoisyTerminal: noisy_terminal(run); break;
      case Scenario::kPointProcess: point_process(run); break;
      case Scenario::kWeakConvergence: weak_convergence(run); break;
      case Scenario::kStoppingTime: stopping_time(run); break;
    }
  } catch (const NumericalFailure& e) {
    error = {{"stage", run.stage}, {"kind", "numerical-failure"}, {"message", e.what()}};
  } catch (const DomainViolation& e) {
    error = {{"stage", run.stage}, {"kind", "domain-violation"}, {"message", e.what()}};
  }
  run.finish();

  run.stage = "write outputs";
  const auto started = std::chrono::steady_clock::now();
  const fs::path out(cfg.out);
  fs::create_directories(out / "figures");
  auto add = [&](const fs::path& p) { outcome.artifacts.push_back(p.string()); };
  write_compensator_csv((out / "compensator.csv").string(), run.compensator);
  add(out / "compensator.csv");
  write_mgtest_csv((out / "mgtest.csv").string(), run.mgtest);
  add(out / "mgtest.csv");
  write_convergence_csv((out / "convergence.csv").string(), run.convergence);
  add(out / "convergence.csv");
  for (const auto& [name, fig] : run.figures) {
    write_svg((out / "figures" / name).string(), fig);
    add(out / "figures" / name);
  }
  add(out / "report.json");
  run.timings["write outputs"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  bool all = true;
  for (const auto& c : run.checks) all = all && c["pass"].get<bool>();
  outcome.exit_code = error.is_null() && all ? 0 : 1;

  json& r = outcome.report;
  r["config"] = config_to_json(cfg);
  r["status"] = !error.is_null() ? "error" : (all ? "pass" : "fail");
  r["exit_code"] = outcome.exit_code;
  r["results"] = run.results;
  r["checks"] = run.checks;
  r["timings_seconds"] = run.timings;
  r["artifacts"] = outcome.artifacts;
  r["error"] = error;
  std::ofstream(out / "report.json") << r.dump(2) << '\n';
  return outcome;
}

}  // namespace fexp::cli
