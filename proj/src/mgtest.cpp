#include "fexp/mgtest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "fexp/errors.hpp"
#include "fexp/rng.hpp"
#include "fexp/stats.hpp"

namespace fexp {

namespace {

constexpr std::size_t kMinPaths = 2000;
constexpr std::size_t kProductWidth = 4;

Eigen::VectorXd increments(const PathEnsemble& m, std::size_t k0, std::size_t k1) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(m.path_count()));
  for (std::size_t p = 0; p < m.path_count(); ++p) {
    y(static_cast<Eigen::Index>(p)) = m.value(p, k1) - m.value(p, k0);
  }
  return y;
}

double mean_abs(const Eigen::VectorXd& v) {
  std::vector<double> a(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) a[static_cast<std::size_t>(i)] = std::abs(v(i));
  return pairwise_sum(a) / static_cast<double>(a.size());
}

}  // namespace

Eigen::MatrixXd polynomial_basis(const Eigen::MatrixXd& features, const std::vector<std::string>& names,
                                 std::vector<std::string>* basis_names) {
  const auto n = features.rows();
  const auto d = features.cols();
  const Eigen::Index first = std::max<Eigen::Index>(0, d - static_cast<Eigen::Index>(kProductWidth));
  const Eigen::Index w = d - first;
  Eigen::MatrixXd b(n, 1 + d + w * (w + 1) / 2);
  std::vector<std::string> out{"1"};
  b.col(0).setOnes();
  Eigen::Index c = 1;
  for (Eigen::Index j = 0; j < d; ++j) {
    b.col(c++) = features.col(j);
    out.push_back(names.at(static_cast<std::size_t>(j)));
  }
  for (Eigen::Index i = first; i < d; ++i) {
    for (Eigen::Index j = i; j < d; ++j) {
      b.col(c++) = features.col(i).cwiseProduct(features.col(j));
      out.push_back(names[static_cast<std::size_t>(i)] + "*" + names[static_cast<std::size_t>(j)]);
    }
  }
  if (basis_names) *basis_names = std::move(out);
  return b;
}

double mean_path_supremum(const PathEnsemble& m, double window) {
  const std::size_t k_max = m.grid().index_at_or_below(window);
  std::vector<double> sup(m.path_count(), 0.0);
  for (std::size_t p = 0; p < m.path_count(); ++p) {
    for (std::size_t k = 0; k <= k_max; ++k) sup[p] = std::max(sup[p], std::abs(m.value(p, k)));
  }
  return pairwise_sum(sup) / static_cast<double>(std::max<std::size_t>(1, sup.size()));
}

MartingaleTestReport increment_orthogonality_test(const PathEnsemble& m,
                                                  const std::vector<SigmaFieldSpec>& specs,
                                                  const std::vector<double>& times, double alpha,
                                                  double window, std::size_t lag_steps) {
  if (m.path_count() < kMinPaths) {
    throw InvalidArgument("martingale test needs at least " + std::to_string(kMinPaths) + " paths");
  }
  if (times.empty() || specs.size() != times.size()) {
    throw InvalidArgument("martingale test needs one feature spec per test time");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
  if (lag_steps == 0) throw InvalidArgument("lag must be at least one grid step");
  const auto& grid = m.grid();
  const double tol = 1e-9 * std::max(1.0, grid.horizon());

  MartingaleTestReport rep;
  rep.test = "increment-orthogonality";
  rep.alpha = alpha;
  rep.lag_steps = lag_steps;
  rep.times = times;
  rep.feature_label = specs.front().label;
  rep.mean_sup = mean_path_supremum(m, window);

  std::size_t tests = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const std::size_t k0 = grid.index_at_or_below(times[i]);
    const std::size_t k1 = k0 + lag_steps;
    if (k1 >= grid.size() || grid[k1] > window + tol) {
      throw InvalidArgument("test time " + std::to_string(times[i]) + " plus the lag leaves the window");
    }
    if (std::abs(specs[i].time - times[i]) > tol) {
      throw InvalidArgument("feature spec time differs from the test time");
    }
    const Eigen::MatrixXd x = feature_matrix(specs[i], m.path_count());
    TimeStatistic row;
    row.t = times[i];
    const Eigen::MatrixXd design = polynomial_basis(x, specs[i].feature_names, &row.basis);
    const LinearFit fit = ordinary_least_squares(design, increments(m, k0, k1));
    rep.dropped_columns = rep.dropped_columns || fit.dropped_columns;
    row.coefficients.assign(fit.coefficients.data(), fit.coefficients.data() + fit.coefficients.size());
    row.t_values.assign(row.coefficients.size(), 0.0);
    for (std::size_t j = 0; j < row.coefficients.size(); ++j) {
      if (!fit.kept[j]) continue;
      const auto jj = static_cast<Eigen::Index>(j);
      const double se = fit.standard_errors(jj);
      const double tv = se > 0.0 ? fit.coefficients(jj) / se : 0.0;
      row.t_values[j] = tv;
      const double p = student_t_two_sided_p(tv, static_cast<double>(fit.dof));
      if (std::abs(tv) >= row.statistic) row.statistic = std::abs(tv);
      row.p_value = std::min(row.p_value, p);
      ++tests;
    }
    rep.rows.push_back(std::move(row));
  }
  for (auto& row : rep.rows) {
    row.p_adjusted = std::min(1.0, row.p_value * static_cast<double>(tests));
    if (row.p_adjusted < alpha) rep.pass = false;
  }
  return rep;
}

MeanEstimate realized_quadratic_variation(const PathEnsemble& m, double t) {
  const std::size_t k_max = m.grid().index_at_or_below(t);
  std::vector<double> qv(m.path_count());
  std::vector<double> sq(k_max);
  for (std::size_t p = 0; p < m.path_count(); ++p) {
    for (std::size_t k = 0; k < k_max; ++k) {
      const double d = m.value(p, k + 1) - m.value(p, k);
      sq[k] = d * d;
    }
    qv[p] = pairwise_sum(sq);
  }
  return summarize(qv);
}

MartingaleTestReport qv_test(const PathEnsemble& m, double t, double tolerance) {
  const auto& grid = m.grid();
  // Times between the last grid point and one step past it read the last point.
  if (!(t > 0.0) || t >= grid.horizon() + grid.max_step()) {
    throw InvalidArgument("QV time must lie in (0, horizon]");
  }
  if (grid.max_step() > std::ldexp(1.0, -10) * (1.0 + 1e-9)) {
    throw InvalidArgument("QV test needs grid steps of at most 2^-10");
  }
  if (!(tolerance > 0.0)) throw InvalidArgument("tolerance must be positive");
  const MeanEstimate qv = realized_quadratic_variation(m, t);
  const double reached = grid[grid.index_at_or_below(t)];
  MartingaleTestReport rep;
  rep.test = "quadratic-variation";
  rep.times = {t};
  rep.tolerance = tolerance;
  rep.mean_sup = mean_path_supremum(m, t);
  TimeStatistic row;
  row.t = t;
  row.statistic = qv.mean;
  row.p_value = qv.std_error > 0.0 ? normal_two_sided_p((qv.mean - reached) / qv.std_error)
                                   : (qv.mean == reached ? 1.0 : 0.0);
  row.p_adjusted = row.p_value;
  rep.rows.push_back(row);
  rep.pass = std::abs(qv.mean - reached) <= tolerance * reached;
  return rep;
}

QuasimartingaleEstimate quasimartingale_variation(const PathEnsemble& m, const Subdivision& pi,
                                                  const std::vector<SigmaFieldSpec>& specs,
                                                  std::size_t permutations) {
  if (m.path_count() < kMinPaths) {
    throw InvalidArgument("quasimartingale estimate needs at least " + std::to_string(kMinPaths) + " paths");
  }
  const auto& grid = m.grid();
  if (pi.horizon() > grid.horizon() * (1.0 + 1e-12)) {
    throw InvalidArgument("subdivision reaches past the path horizon");
  }
  if (specs.size() != pi.intervals()) throw InvalidArgument("one feature spec per subdivision interval");
  const Subdivision snapped = pi.snapped_to(grid);
  const std::size_t n = m.path_count();

  QuasimartingaleEstimate out;
  std::vector<double> per_path(n, 0.0);
  std::vector<double> floor_runs(permutations, 0.0);
  const RngContract rng{m.seed()};
  for (std::size_t i = 0; i < pi.intervals(); ++i) {
    const std::size_t k0 = grid.index_at_or_below(snapped[i]);
    const std::size_t k1 = grid.index_at_or_below(snapped[i + 1]);
    if (specs[i].time > pi[i] + 1e-9 * std::max(1.0, grid.horizon())) {
      throw InvalidArgument("feature spec for interval " + std::to_string(i) + " looks past its start");
    }
    const Eigen::MatrixXd design = polynomial_basis(feature_matrix(specs[i], n), specs[i].feature_names);
    const Eigen::VectorXd y = increments(m, k0, k1);
    const LinearFit fit = ordinary_least_squares(design, y);
    for (std::size_t p = 0; p < n; ++p) per_path[p] += std::abs(fit.fitted(static_cast<Eigen::Index>(p)));
    out.per_interval.push_back(mean_abs(fit.fitted));

    const Eigen::VectorXd centred = y.array() - y.mean();
    for (std::size_t r = 0; r < permutations; ++r) {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      auto stream = rng.stream(i * permutations + r, StreamPurpose::kPermutation);
      std::shuffle(order.begin(), order.end(), stream.engine());
      Eigen::VectorXd yp(centred.size());
      for (std::size_t p = 0; p < n; ++p) yp(static_cast<Eigen::Index>(p)) = centred(static_cast<Eigen::Index>(order[p]));
      floor_runs[r] += mean_abs(ordinary_least_squares(design, yp).fitted);
    }
  }
  const MeanEstimate sampled = summarize(per_path);
  out.estimate = sampled.mean;
  double floor_mean = 0.0;
  double floor_sd = 0.0;
  if (permutations > 0) {
    floor_mean = pairwise_sum(floor_runs) / static_cast<double>(permutations);
    floor_sd = permutations > 1 ? std::sqrt(sample_variance(floor_runs)) : 0.0;
  }
  out.noise_floor = floor_mean + 3.0 * floor_sd;
  out.std_error = std::hypot(sampled.std_error, floor_mean);
  return out;
}

std::vector<SigmaFieldSpec> make_lagged_specs(const std::string& label,
                                              const std::vector<const PathEnsemble*>& sources,
                                              const std::vector<std::string>& names,
                                              const std::vector<double>& times, std::size_t lag_steps,
                                              const std::vector<ScalarFeature>& scalars) {
  if (sources.empty() || names.size() != sources.size()) {
    throw InvalidArgument("one name per feature source");
  }
  std::vector<SigmaFieldSpec> out;
  for (double t : times) {
    struct Source {
      const PathEnsemble* e;
      std::size_t now;
      std::size_t back;
    };
    std::vector<Source> src;
    SigmaFieldSpec spec;
    spec.label = label;
    spec.time = t;
    for (std::size_t j = 0; j < sources.size(); ++j) {
      const auto& grid = sources[j]->grid();
      const std::size_t k = grid.index_at_or_below(t);
      if (k < lag_steps) throw InvalidArgument("test time " + std::to_string(t) + " is shorter than the lag");
      src.push_back({sources[j], k, k - lag_steps});
      spec.feature_names.push_back(names[j] + "(t)");
    }
    for (const auto& nm : names) spec.feature_names.push_back("d" + nm);
    for (const auto& sc : scalars) {
      if (!sc.values) throw InvalidArgument("scalar feature '" + sc.name + "' has no values");
      spec.feature_names.push_back(sc.name);
    }
    spec.extract = [src, scalars](std::size_t p, std::span<double> row) {
      const std::size_t m = src.size();
      for (std::size_t j = 0; j < m; ++j) {
        row[j] = src[j].e->value(p, src[j].now);
        row[m + j] = row[j] - src[j].e->value(p, src[j].back);
      }
      for (std::size_t j = 0; j < scalars.size(); ++j) row[2 * m + j] = (*scalars[j].values)[p];
    };
    out.push_back(std::move(spec));
  }
  return out;
}

}  // namespace fexp
