#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fexp/core.hpp"
#include "fexp/rng.hpp"
#include "fexp/stats.hpp"

namespace fexp {

// ---------------------------------------------------------------------------
// Finite-dimensional sigma-field surrogates
// ---------------------------------------------------------------------------

/// Features observable at `time`, one vector per path. The extractor must
/// only read path values at times <= `time`.
struct SigmaFieldSpec {
  using Extractor = std::function<void(std::size_t path, std::span<double> out)>;

  std::string label;
  double time = 0.0;
  std::vector<std::string> feature_names;
  Extractor extract;

  std::size_t dim() const { return feature_names.size(); }
};

/// One feature: the value of `ensemble` at the grid time at or below `time`,
/// or, when `scalars` is set, a per-path value known from time 0. The
/// pointed-to data must outlive the spec.
struct Tap {
  std::string name;
  const PathEnsemble* ensemble = nullptr;
  double time = 0.0;
  const std::vector<double>* scalars = nullptr;
};

/// Throws InvalidArgument if any tap looks past `t`.
SigmaFieldSpec make_tap_spec(std::string label, double t, std::vector<Tap> taps);

/// Features for the filtration generated by discretizing `ensemble` along
/// `pi`, observed at time t, and reduced to what matters for targets that are
/// functions of the path at `argument_times`. For a Markov path the skeleton
/// values bracketing each argument time are sufficient: the subdivision
/// point at or below it and, if not past t, the next one above.
SigmaFieldSpec make_discretized_spec(std::string label, const PathEnsemble& ensemble,
                                     const Subdivision& pi, double t,
                                     const std::vector<double>& argument_times);

/// Two features observable at t for first-passage problems: the path at the
/// last subdivision point <= t, and the maximum over the earlier subdivision
/// points (the value at 0 when there are none). A non-empty `max_times`
/// restricts the maximum to subdivision points that are also in that set,
/// which is what a first passage checked on a coarser clock needs.
SigmaFieldSpec make_running_max_spec(std::string label, const PathEnsemble& ensemble,
                                     const Subdivision& pi, double t,
                                     const std::vector<double>& max_times = {});

/// n x dim matrix of features.
Eigen::MatrixXd feature_matrix(const SigmaFieldSpec& spec, std::size_t path_count);

// ---------------------------------------------------------------------------
// Regression estimates of conditional expectations
// ---------------------------------------------------------------------------

enum class RegressionMethod { kKnn, kLeastSquares };

std::string to_string(RegressionMethod m);

struct RegressionConfig {
  RegressionMethod method = RegressionMethod::kKnn;
  /// Neighbour count; 0 selects ceil(n^{4/5} / 10).
  std::size_t k = 0;
  /// Leave-one-out predictions as the fitted values (kNN only; least
  /// squares always reports in-sample fits and LOO errors separately).
  bool cross_fit = true;
  /// Minimum path count accepted.
  std::size_t min_paths = 500;
};

struct RegressionEstimate {
  std::vector<double> fitted;
  std::string method;
  double in_sample_l1 = 0.0;
  double cross_fitted_l1 = 0.0;
  /// All feature columns had zero variance; fitted values are the mean.
  bool degenerate_features = false;
  /// Some collinear or constant feature columns were dropped.
  bool dropped_columns = false;
};

std::size_t default_neighbour_count(std::size_t n);

RegressionEstimate estimate_conditional_expectation(std::span<const double> targets,
                                                    const Eigen::MatrixXd& features,
                                                    const RegressionConfig& cfg = {});
RegressionEstimate estimate_conditional_expectation(std::span<const double> targets,
                                                    const SigmaFieldSpec& spec,
                                                    const RegressionConfig& cfg = {});

// ---------------------------------------------------------------------------
// Weak convergence of sigma-fields
// ---------------------------------------------------------------------------

struct ConvergenceRow {
  int level = 0;
  std::string label;
  /// Fraction of paths with |fitted - target| > eta.
  double distance = 0.0;
  double std_error = 0.0;
  double cross_fitted_l1 = 0.0;
};

/// d_n per level for bounded targets f. `levels[i]` labels `specs[i]`.
std::vector<ConvergenceRow> weak_convergence_report(std::span<const double> targets,
                                                    const std::vector<SigmaFieldSpec>& specs,
                                                    const std::vector<int>& levels, double eta,
                                                    const RegressionConfig& cfg = {});

/// Number of strict increases in the distance column.
std::size_t count_increases(const std::vector<ConvergenceRow>& rows);

// ---------------------------------------------------------------------------
// Stopping-time approximation
// ---------------------------------------------------------------------------

/// tau_m = min{t_i : estimated P(tau = t_i | features at t_i) > 1/2}, or the
/// last time when no estimate exceeds 1/2. `specs[i]` gives the features
/// observed at `times[i]`.
std::vector<double> approximate_stopping_time(std::span<const double> tau,
                                              const std::vector<double>& times,
                                              const std::vector<SigmaFieldSpec>& specs,
                                              const RegressionConfig& cfg = {});

/// First time among `times` at which the path exceeds `level` (value read at
/// the grid time at or below), or the last time if it never does.
std::vector<double> first_passage_times(const PathEnsemble& ensemble,
                                        const std::vector<double>& times, double level);

// ---------------------------------------------------------------------------
// Marked point processes
// ---------------------------------------------------------------------------

struct PointProcessSpec {
  using Sampler = std::function<double(std::size_t index, RandomStream& stream)>;

  /// Jump time of the index-th point (index starts at 1); must be > 0.
  Sampler jump_time;
  /// Mark of the index-th point.
  Sampler mark;
  /// Declared E|X_i|.
  double mark_mean = 1.0;
  std::size_t truncation = 1;
  double horizon = 1.0;
  /// Points beyond this index are not simulated; the full process is
  /// represented by its first `max_index` points.
  std::size_t max_index = 4096;

  void validate() const;
};

/// tau_i ~ Exp(rate 1/i^2), X_i ~ Exp(1), T = 1.
PointProcessSpec preset_point_process(std::size_t truncation, std::size_t max_index = 4096);

struct PointProcessSample {
  PathEnsemble full;
  PathEnsemble truncated;
  /// sup_{t <= T} |N_t - N^n_t| per path, from the exact jump times.
  std::vector<double> sup_distance;
  /// Empirical P(tau_i <= T) for i = 1..max_index (entry i - 1).
  std::vector<double> hit_probability;
  /// Largest number of jumps in [0, T] on any path.
  std::size_t max_realized_jumps = 0;
};

PointProcessSample truncate_point_process(const PointProcessSpec& spec, const TimeGrid& grid,
                                          const RngContract& rng, std::size_t paths);

/// (mu / eta) * sum_{i > n} P(tau_i <= T) with the empirical probabilities.
double point_process_tail_bound(const PointProcessSpec& spec, const PointProcessSample& sample,
                                double eta);

}  // namespace fexp
