#include "fexp/stats.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "fexp/errors.hpp"

namespace fexp {

double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 16) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double mean = pairwise_sum(xs) / static_cast<double>(xs.size());
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - mean) * (xs[i] - mean);
  return pairwise_sum(sq) / static_cast<double>(xs.size() - 1);
}

MeanEstimate summarize(std::span<const double> xs) {
  MeanEstimate m;
  m.count = xs.size();
  if (xs.empty()) return m;
  m.mean = pairwise_sum(xs) / static_cast<double>(xs.size());
  m.std_error = std::sqrt(sample_variance(xs) / static_cast<double>(xs.size()));
  return m;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_two_sided_p(double z) {
  if (!std::isfinite(z)) return 0.0;
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

double student_t_two_sided_p(double t, double dof) {
  if (!std::isfinite(t)) return 0.0;
  if (dof <= 0.0) return 1.0;
  boost::math::students_t dist(dof);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

LinearFit ordinary_least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
  const auto n = design.rows();
  const auto p = design.cols();
  if (y.size() != n) throw InvalidArgument("response length differs from design rows");
  if (n == 0) throw InvalidArgument("empty regression");

  // Greedy in-order column selection on the Gram matrix: a column is kept
  // when its squared residual against the kept ones exceeds 1e-10 of its
  // squared norm.
  const Eigen::MatrixXd gram = design.transpose() * design;
  std::vector<Eigen::Index> kept_idx;
  Eigen::MatrixXd chol = Eigen::MatrixXd::Zero(p, p);
  LinearFit fit;
  fit.kept.assign(static_cast<std::size_t>(p), false);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double gjj = gram(j, j);
    if (!(gjj > 0.0)) continue;
    const auto r = static_cast<Eigen::Index>(kept_idx.size());
    Eigen::VectorXd v(r);
    for (Eigen::Index a = 0; a < r; ++a) {
      double s = gram(kept_idx[a], j);
      for (Eigen::Index b = 0; b < a; ++b) s -= chol(a, b) * v(b);
      v(a) = s / chol(a, a);
    }
    const double d = gjj - v.squaredNorm();
    if (d <= 1e-10 * gjj) continue;
    for (Eigen::Index b = 0; b < r; ++b) chol(r, b) = v(b);
    chol(r, r) = std::sqrt(d);
    kept_idx.push_back(j);
    fit.kept[static_cast<std::size_t>(j)] = true;
  }
  const auto r = static_cast<Eigen::Index>(kept_idx.size());
  fit.rank = static_cast<std::size_t>(r);
  fit.dropped_columns = r < p;
  fit.coefficients = Eigen::VectorXd::Zero(p);
  fit.standard_errors = Eigen::VectorXd::Zero(p);

  if (r == 0) {
    fit.fitted = Eigen::VectorXd::Zero(n);
    fit.residuals = y;
    fit.leverage = Eigen::VectorXd::Zero(n);
    fit.dof = static_cast<std::size_t>(n);
    fit.residual_variance = y.squaredNorm() / std::max<double>(1.0, static_cast<double>(n));
    return fit;
  }

  Eigen::MatrixXd x(n, r);
  for (Eigen::Index a = 0; a < r; ++a) x.col(a) = design.col(kept_idx[a]);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  const Eigen::MatrixXd rmat = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  const Eigen::VectorXd qty = (qr.householderQ().transpose() * y).head(r);
  const Eigen::VectorXd beta = rmat.triangularView<Eigen::Upper>().solve(qty);

  fit.fitted = x * beta;
  fit.residuals = y - fit.fitted;
  fit.dof = n > r ? static_cast<std::size_t>(n - r) : 0;
  fit.residual_variance =
      fit.dof > 0 ? fit.residuals.squaredNorm() / static_cast<double>(fit.dof) : 0.0;

  // Q1 = X R^{-1}; leverage is the squared row norm of Q1.
  const Eigen::MatrixXd rinv =
      rmat.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(r, r));
  const Eigen::MatrixXd q1 = x * rinv;
  fit.leverage = q1.rowwise().squaredNorm();
  const Eigen::VectorXd cov_diag = rinv.rowwise().squaredNorm();

  for (Eigen::Index a = 0; a < r; ++a) {
    fit.coefficients(kept_idx[a]) = beta(a);
    fit.standard_errors(kept_idx[a]) = std::sqrt(fit.residual_variance * cov_diag(a));
  }
  return fit;
}

TrendTest linear_trend_test(std::span<const double> x, std::span<const double> values) {
  if (x.size() != values.size() || x.size() < 3) {
    throw InvalidArgument("trend test needs at least 3 paired points");
  }
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = x[static_cast<std::size_t>(i)];
    y(i) = values[static_cast<std::size_t>(i)];
  }
  const LinearFit fit = ordinary_least_squares(design, y);
  TrendTest out;
  out.intercept = fit.coefficients(0);
  out.slope = fit.coefficients(1);
  const double se = fit.standard_errors(1);
  if (se > 0.0) {
    out.t_statistic = out.slope / se;
    out.p_two_sided = student_t_two_sided_p(out.t_statistic, static_cast<double>(fit.dof));
    boost::math::students_t dist(static_cast<double>(fit.dof));
    out.p_upward = boost::math::cdf(boost::math::complement(dist, out.t_statistic));
  } else {
    out.t_statistic = out.slope == 0.0 ? 0.0 : (out.slope > 0 ? INFINITY : -INFINITY);
    out.p_two_sided = out.slope == 0.0 ? 1.0 : 0.0;
    out.p_upward = out.slope > 0.0 ? 0.0 : 1.0;
  }
  return out;
}

std::size_t count_inversions(std::span<const double> values) {
  std::size_t c = 0;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    if (values[i + 1] > values[i]) ++c;
  }
  return c;
}

}  // namespace fexp
