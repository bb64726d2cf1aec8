#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fexp/core.hpp"
#include "fexp/density.hpp"
#include "fexp/simulate.hpp"
#include "fexp/stats.hpp"

namespace fexp {

enum class ScenarioVariant {
  kBrownianReversal,
  kDiffusionReversal,
  kNoisyTerminal,
  kPointProcess,
};

std::string to_string(ScenarioVariant v);

struct ExpansionScenario {
  ScenarioVariant variant = ScenarioVariant::kBrownianReversal;
  double horizon = 1.0;
  /// Enlargement cutoff; must be strictly below horizon / 2 for reversals.
  double t_max = 0.4;
  std::optional<SdeCoefficients> coefficients;
  /// Noise precision n in tau_n = tau + N / sqrt(n).
  double noise_precision = 0.0;

  void validate() const;
};

/// Level reported for the mesh limit A.
inline constexpr int kLimitLevel = -1;

struct CompensatorResult {
  /// A on the grid times 0 .. t_max.
  Path trajectory;
  /// Sum of increments over each subdivision interval (one entry for the limit).
  std::vector<double> contributions;
  /// sum_k |A_{k+1} - A_k| over the trajectory.
  double total_variation = 0.0;
  int level = kLimitLevel;
};

/// Memoizes score evaluations by exact (t, x, y). Closed-form kinds bypass the
/// table. Not thread-safe: use one per path.
class ScoreCache {
 public:
  explicit ScoreCache(const ScoreFunction& score) : score_(score) {}

  ScoreValue operator()(double t, double x, double y);
  std::size_t hits() const { return hits_; }
  std::size_t size() const { return table_.size(); }

 private:
  struct Key {
    double t, x, y;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const;
  };
  const ScoreFunction& score_;
  std::unordered_map<Key, ScoreValue, KeyHash> table_;
  std::size_t hits_ = 0;
};

/// Discretized compensator: on [t_i, t_{i+1}) the integrand is
/// score(T - t_i - s, X_s, X_{T - t_i}), integrated by left-endpoint sums on
/// the path grid and concatenated over i. `pi` is a subdivision of [0, t_max];
/// its points are snapped down to grid times.
CompensatorResult compensator_An(const Path& x, const Subdivision& pi, const ScoreFunction& score,
                                 double t_max, ScoreCache* cache = nullptr);

/// Mesh limit: integrand score(T - 2s, X_s, X_{T - s}).
CompensatorResult compensator_limit(const Path& x, const ScoreFunction& score, double t_max);

/// (b_rev - b_s) / (1 - 2s), the Brownian reversal drift on [0, 1/2).
double brownian_reversal_drift(double s, double b_s, double b_rev);

/// (tau_n - b_s) / ((T - s) + 1/n): score of the Gaussian conditional law of
/// tau_n = B_T + N / sqrt(n) given B_s.
double noisy_terminal_drift(double s, double tau_n, double b_s, double n, double horizon);

/// (tau - b_s) / (T - s), the n -> infinity limit (Brownian bridge drift).
double bridge_drift(double s, double tau, double b_s, double horizon);

/// tau_n = B_T + N / sqrt(n) per path; N comes from the (seed, path, kNoise)
/// stream, so the same N is reused across precisions.
std::vector<double> sample_noisy_terminal(const PathEnsemble& brownian, double n);

/// int_0^t drift ds by left-endpoint sums up to t_max. `n` may be infinite,
/// which gives the bridge compensator.
CompensatorResult noisy_terminal_compensator(const Path& b, double tau_n, double n, double t_max);

struct LevelEstimate {
  int level = 0;
  double mean = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo mean of the total variation of compensator_An per subdivision.
std::vector<LevelEstimate> integrability_diagnostic(const PathEnsemble& ensemble,
                                                    const std::vector<Subdivision>& subdivisions,
                                                    const ScoreFunction& score, double t_max);

/// sup_{t <= t_max} |a_t - b_t| over two trajectories on the same grid.
double sup_distance(const Path& a, const Path& b);

/// X - A per path on the grid prefix covered by the compensators; also
/// returns A itself. `compensate(p, path)` computes the compensator of path p.
struct CompensatedEnsemble {
  PathEnsemble martingale;
  PathEnsemble compensator;
};
CompensatedEnsemble subtract_compensator(
    const PathEnsemble& x,
    const std::function<CompensatorResult(std::size_t path, const Path& x)>& compensate);

/// Grid of the first `count` points of `grid`.
TimeGrid grid_prefix(const TimeGrid& grid, std::size_t count);

}  // namespace fexp
