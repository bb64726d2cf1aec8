#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fexp/converge.hpp"
#include "fexp/core.hpp"

namespace fexp {

/// One tested time. For the orthogonality test `statistic` is the largest
/// |t| over the basis coefficients and `p_value` the smallest raw p-value;
/// for the QV test it is the ensemble-mean realized QV and a normal p-value
/// for "mean QV = t".
struct TimeStatistic {
  double t = 0.0;
  double statistic = 0.0;
  double p_value = 1.0;
  /// Bonferroni-adjusted, capped at 1.
  double p_adjusted = 1.0;
  std::vector<std::string> basis;
  std::vector<double> coefficients;
  std::vector<double> t_values;
};

struct MartingaleTestReport {
  std::string test;
  std::vector<TimeStatistic> rows;
  bool pass = true;
  double alpha = 0.01;
  std::size_t lag_steps = 0;
  std::vector<double> times;
  std::string feature_label;
  /// Collinear basis columns were dropped somewhere.
  bool dropped_columns = false;
  /// Ensemble mean of sup_{t <= window} |M_t|, reported for integrability.
  double mean_sup = 0.0;
  /// QV test only: relative tolerance applied to |mean QV - t| / t.
  double tolerance = 0.0;
};

inline constexpr std::size_t kDefaultLagSteps = 16;

/// Constant, every feature, and the products f_i f_j (i <= j) of the last
/// four features. Names follow the feature names.
Eigen::MatrixXd polynomial_basis(const Eigen::MatrixXd& features,
                                 const std::vector<std::string>& names,
                                 std::vector<std::string>* basis_names = nullptr);

/// Regresses M_{t+h} - M_t on the basis of `specs[i]` (observed at times[i])
/// and t-tests every coefficient against 0. Bonferroni over coefficients and
/// times; fails iff some adjusted p-value is below alpha.
MartingaleTestReport increment_orthogonality_test(const PathEnsemble& m,
                                                  const std::vector<SigmaFieldSpec>& specs,
                                                  const std::vector<double>& times, double alpha,
                                                  double window,
                                                  std::size_t lag_steps = kDefaultLagSteps);

/// Per-path sum of squared increments up to grid time t.
MeanEstimate realized_quadratic_variation(const PathEnsemble& m, double t);

/// Passes iff |mean realized QV - t| <= tolerance * t. Requires grid step
/// <= 2^-10.
MartingaleTestReport qv_test(const PathEnsemble& m, double t, double tolerance);

struct QuasimartingaleEstimate {
  double estimate = 0.0;
  /// Path sampling error combined with the regression noise floor mean.
  double std_error = 0.0;
  /// Mean plus three standard deviations of the estimate over permuted,
  /// centred increments; martingales should land below it.
  double noise_floor = 0.0;
  std::vector<double> per_interval;
};

/// sum_i mean_p |E^(M_{t_{i+1}} - M_{t_i} | features at t_i)| with the
/// polynomial basis. `specs[i]` observes time pi[i]; one per interval.
QuasimartingaleEstimate quasimartingale_variation(const PathEnsemble& m, const Subdivision& pi,
                                                  const std::vector<SigmaFieldSpec>& specs,
                                                  std::size_t permutations = 10);

/// Per-path value known from time 0 (initial enlargement).
struct ScalarFeature {
  std::string name;
  const std::vector<double>* values = nullptr;
};

/// Features at each time t: every source at t, then every source's increment
/// over the last h = lag_steps grid steps, then the scalars.
std::vector<SigmaFieldSpec> make_lagged_specs(const std::string& label,
                                              const std::vector<const PathEnsemble*>& sources,
                                              const std::vector<std::string>& names,
                                              const std::vector<double>& times,
                                              std::size_t lag_steps = kDefaultLagSteps,
                                              const std::vector<ScalarFeature>& scalars = {});

/// Ensemble mean of sup_{t <= window} |M_t|.
double mean_path_supremum(const PathEnsemble& m, double window);

}  // namespace fexp
