#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fexp {

/// Sample mean with its standard error.
struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

/// Pairwise (cascade) summation in fixed order; the result depends only on
/// the sequence, not on how it was produced.
double pairwise_sum(std::span<const double> xs);

MeanEstimate summarize(std::span<const double> xs);

double sample_variance(std::span<const double> xs);

double normal_cdf(double z);
double normal_two_sided_p(double z);
double student_t_two_sided_p(double t, double dof);

/// Ordinary least squares with rank-revealing QR. Columns found linearly
/// dependent on earlier ones are dropped; their coefficients are reported as
/// zero with `kept[j] == false`.
struct LinearFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;
  /// Diagonal of the hat matrix, used for leave-one-out predictions.
  Eigen::VectorXd leverage;
  std::vector<bool> kept;
  double residual_variance = 0.0;
  std::size_t rank = 0;
  std::size_t dof = 0;
  bool dropped_columns = false;
};

LinearFit ordinary_least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& y);

/// Linear trend of `values` against `x`, tested with the usual residual-based
/// t statistic on n - 2 degrees of freedom.
struct TrendTest {
  double slope = 0.0;
  double intercept = 0.0;
  double t_statistic = 0.0;
  double p_two_sided = 1.0;
  double p_upward = 1.0;
};

TrendTest linear_trend_test(std::span<const double> x, std::span<const double> values);

/// Number of i with values[i+1] > values[i] (strict increases).
std::size_t count_inversions(std::span<const double> values);

}  // namespace fexp
