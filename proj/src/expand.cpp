#include "fexp/expand.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "fexp/errors.hpp"
#include "fexp/rng.hpp"

namespace fexp {

namespace {

double tolerance(double horizon) { return 1e-9 * std::max(1.0, horizon); }

void check_reversal_cutoff(const Path& x, double t_max) {
  const double T = x.grid().horizon();
  if (!(t_max > 0.0)) throw InvalidArgument("t_max must be positive");
  if (!(t_max < T / 2.0)) {
    throw InvalidArgument("t_max must lie strictly below half the horizon");
  }
}

// Value of the path at the grid time T - u for a grid time u.
double reversed_value(const Path& x, double u) {
  return x.at(x.grid().horizon() - u);
}

CompensatorResult finish(const TimeGrid& grid, std::size_t k_max, std::vector<double> a,
                         std::vector<double> contributions, int level) {
  CompensatorResult out{Path(grid_prefix(grid, k_max + 1), std::move(a)), std::move(contributions),
                        0.0, level};
  const auto v = out.trajectory.values();
  std::vector<double> abs_inc(v.size() - 1);
  for (std::size_t k = 0; k + 1 < v.size(); ++k) abs_inc[k] = std::abs(v[k + 1] - v[k]);
  double tv = 0.0;
  for (double d : abs_inc) tv += d;
  out.total_variation = tv;
  return out;
}

[[noreturn]] void rethrow_score_failure(const std::exception& e, std::size_t interval, double s,
                                        std::size_t k) {
  throw NumericalFailure("score evaluation failed on interval " + std::to_string(interval) +
                             " at s = " + std::to_string(s) + ": " + e.what(),
                         k);
}

}  // namespace

std::string to_string(ScenarioVariant v) {
  switch (v) {
    case ScenarioVariant::kBrownianReversal: return "brownian-reversal";
    case ScenarioVariant::kDiffusionReversal: return "diffusion-reversal";
    case ScenarioVariant::kNoisyTerminal: return "noisy-terminal";
    case ScenarioVariant::kPointProcess: return "point-process";
  }
  return "brownian-reversal";
}

void ExpansionScenario::validate() const {
  if (!(horizon > 0.0)) throw InvalidArgument("horizon must be positive");
  if (!(t_max > 0.0)) throw InvalidArgument("t_max must be positive");
  const bool reversal = variant == ScenarioVariant::kBrownianReversal ||
                        variant == ScenarioVariant::kDiffusionReversal;
  if (reversal && !(t_max < horizon / 2.0)) {
    throw InvalidArgument("reversal scenarios need t_max < T/2");
  }
  if (!reversal && !(t_max <= horizon)) throw InvalidArgument("t_max beyond the horizon");
  if (variant == ScenarioVariant::kDiffusionReversal && !coefficients) {
    throw InvalidArgument("diffusion reversal needs SDE coefficients");
  }
  if (variant == ScenarioVariant::kNoisyTerminal && !(noise_precision > 0.0)) {
    throw InvalidArgument("noise precision must be positive");
  }
}

std::size_t ScoreCache::KeyHash::operator()(const Key& k) const {
  std::uint64_t h = mix64(std::bit_cast<std::uint64_t>(k.t));
  h = mix64(h ^ std::bit_cast<std::uint64_t>(k.x));
  h = mix64(h ^ std::bit_cast<std::uint64_t>(k.y));
  return static_cast<std::size_t>(h);
}

ScoreValue ScoreCache::operator()(double t, double x, double y) {
  if (score_.kind() == ScoreKind::kGaussian) return score_(t, x, y);
  const Key key{t, x, y};
  if (auto it = table_.find(key); it != table_.end()) {
    ++hits_;
    return it->second;
  }
  const ScoreValue v = score_(t, x, y);
  table_.emplace(key, v);
  return v;
}

TimeGrid grid_prefix(const TimeGrid& grid, std::size_t count) {
  if (count < 2 || count > grid.size()) throw InvalidArgument("invalid grid prefix length");
  if (count == grid.size()) return grid;
  std::vector<double> t(grid.times().begin(), grid.times().begin() + static_cast<long>(count));
  return TimeGrid(std::move(t));
}

CompensatorResult compensator_An(const Path& x, const Subdivision& pi, const ScoreFunction& score,
                                 double t_max, ScoreCache* cache) {
  check_reversal_cutoff(x, t_max);
  const TimeGrid& grid = x.grid();
  const double T = grid.horizon();
  if (std::abs(pi.horizon() - t_max) > tolerance(t_max)) {
    throw InvalidArgument("subdivision must cover exactly [0, t_max]");
  }
  const std::size_t k_max = grid.index_at_or_below(t_max);
  if (k_max == 0) throw InvalidArgument("t_max is below the first grid step");
  const Subdivision snapped = pi.snapped_to(grid);
  std::vector<std::size_t> idx(snapped.size());
  for (std::size_t i = 0; i < snapped.size(); ++i) idx[i] = grid.index_at_or_below(snapped[i]);

  std::vector<double> a(k_max + 1, 0.0);
  std::vector<double> contributions(snapped.intervals(), 0.0);
  std::size_t i = 0;
  double anchor = snapped[0];
  double terminal = reversed_value(x, anchor);
  for (std::size_t k = 0; k < k_max; ++k) {
    while (i + 1 < idx.size() - 1 && k >= idx[i + 1]) {
      ++i;
      anchor = snapped[i];
      terminal = reversed_value(x, anchor);
    }
    const double s = grid[k];
    ScoreValue v;
    try {
      v = cache ? (*cache)(T - anchor - s, x[k], terminal) : score(T - anchor - s, x[k], terminal);
    } catch (const std::exception& e) {
      rethrow_score_failure(e, i, s, k);
    }
    if (!std::isfinite(v.value)) {
      throw NumericalFailure("non-finite compensator integrand on interval " + std::to_string(i) +
                                 " at s = " + std::to_string(s),
                             k);
    }
    const double inc = v.value * grid.step(k);
    a[k + 1] = a[k] + inc;
    contributions[i] += inc;
  }
  return finish(grid, k_max, std::move(a), std::move(contributions), pi.level());
}

CompensatorResult compensator_limit(const Path& x, const ScoreFunction& score, double t_max) {
  check_reversal_cutoff(x, t_max);
  const TimeGrid& grid = x.grid();
  const double T = grid.horizon();
  const std::size_t k_max = grid.index_at_or_below(t_max);
  if (k_max == 0) throw InvalidArgument("t_max is below the first grid step");
  std::vector<double> a(k_max + 1, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < k_max; ++k) {
    const double s = grid[k];
    ScoreValue v;
    try {
      v = score(T - 2.0 * s, x[k], reversed_value(x, s));
    } catch (const std::exception& e) {
      rethrow_score_failure(e, 0, s, k);
    }
    if (!std::isfinite(v.value)) {
      throw NumericalFailure("non-finite limit integrand at s = " + std::to_string(s), k);
    }
    const double inc = v.value * grid.step(k);
    a[k + 1] = a[k] + inc;
    total += inc;
  }
  return finish(grid, k_max, std::move(a), {total}, kLimitLevel);
}

double brownian_reversal_drift(double s, double b_s, double b_rev) {
  if (!(s >= 0.0) || !(s < 0.5)) throw InvalidArgument("reversal drift needs 0 <= s < 1/2");
  return (b_rev - b_s) / (1.0 - 2.0 * s);
}

double noisy_terminal_drift(double s, double tau_n, double b_s, double n, double horizon) {
  if (!(s >= 0.0) || !(s < horizon)) throw InvalidArgument("noisy terminal drift needs 0 <= s < T");
  if (!(n > 0.0)) throw InvalidArgument("noise precision must be positive");
  return (tau_n - b_s) / ((horizon - s) + 1.0 / n);
}

double bridge_drift(double s, double tau, double b_s, double horizon) {
  if (!(s >= 0.0) || !(s < horizon)) throw InvalidArgument("bridge drift needs 0 <= s < T");
  return (tau - b_s) / (horizon - s);
}

std::vector<double> sample_noisy_terminal(const PathEnsemble& brownian, double n) {
  if (!(n > 0.0)) throw InvalidArgument("noise precision must be positive");
  RngContract rng{brownian.seed()};
  const std::size_t last = brownian.grid().steps();
  std::vector<double> out(brownian.path_count());
  for (std::size_t p = 0; p < out.size(); ++p) {
    auto stream = rng.stream(p, StreamPurpose::kNoise);
    const double noise = stream.normal();
    out[p] = std::isinf(n) ? brownian.value(p, last) : brownian.value(p, last) + noise / std::sqrt(n);
  }
  return out;
}

CompensatorResult noisy_terminal_compensator(const Path& b, double tau_n, double n, double t_max) {
  const TimeGrid& grid = b.grid();
  const double T = grid.horizon();
  if (!(t_max > 0.0) || !(t_max < T)) throw InvalidArgument("noisy terminal needs 0 < t_max < T");
  const std::size_t k_max = grid.index_at_or_below(t_max);
  if (k_max == 0) throw InvalidArgument("t_max is below the first grid step");
  std::vector<double> a(k_max + 1, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < k_max; ++k) {
    const double s = grid[k];
    const double d = std::isinf(n) ? bridge_drift(s, tau_n, b[k], T)
                                   : noisy_terminal_drift(s, tau_n, b[k], n, T);
    const double inc = d * grid.step(k);
    a[k + 1] = a[k] + inc;
    total += inc;
  }
  return finish(grid, k_max, std::move(a), {total}, 0);
}

std::vector<LevelEstimate> integrability_diagnostic(const PathEnsemble& ensemble,
                                                    const std::vector<Subdivision>& subdivisions,
                                                    const ScoreFunction& score, double t_max) {
  if (ensemble.path_count() < 100) {
    throw InvalidArgument("integrability diagnostic needs at least 100 paths");
  }
  if (subdivisions.empty()) return {};
  const std::size_t levels = subdivisions.size();
  std::vector<std::vector<double>> tv(levels, std::vector<double>(ensemble.path_count()));
  parallel_for(ensemble.path_count(), [&](std::size_t p) {
    const Path x = ensemble.path(p);
    ScoreCache cache(score);
    for (std::size_t l = 0; l < levels; ++l) {
      tv[l][p] = compensator_An(x, subdivisions[l], score, t_max, &cache).total_variation;
    }
  });
  std::vector<LevelEstimate> out;
  for (std::size_t l = 0; l < levels; ++l) {
    const auto m = summarize(tv[l]);
    out.push_back({subdivisions[l].level(), m.mean, m.std_error});
  }
  return out;
}

CompensatedEnsemble subtract_compensator(
    const PathEnsemble& x,
    const std::function<CompensatorResult(std::size_t path, const Path& x)>& compensate) {
  const std::size_t n = x.path_count();
  if (n == 0) throw InvalidArgument("empty ensemble");
  std::vector<std::vector<double>> a(n);
  parallel_for(n, [&](std::size_t p) {
    const auto r = compensate(p, x.path(p));
    a[p].assign(r.trajectory.values().begin(), r.trajectory.values().end());
  });
  const std::size_t len = a.front().size();
  for (const auto& row : a) {
    if (row.size() != len) throw InvalidArgument("compensators cover different time ranges");
  }
  const TimeGrid g = grid_prefix(x.grid(), len);
  auto comp = PathEnsemble::generate(g, x.seed(), n, [&](std::size_t p, std::span<double> row) {
    std::copy(a[p].begin(), a[p].end(), row.begin());
  });
  auto mart = PathEnsemble::generate(g, x.seed(), n, [&](std::size_t p, std::span<double> row) {
    for (std::size_t k = 0; k < len; ++k) row[k] = x.value(p, k) - a[p][k];
  });
  return {std::move(mart), std::move(comp)};
}

double sup_distance(const Path& a, const Path& b) {
  if (a.size() != b.size()) throw InvalidArgument("trajectories have different lengths");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace fexp
