#include "fexp/converge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "fexp/errors.hpp"

namespace fexp {

namespace {

constexpr double kTimeTol = 1e-9;

struct Neighbour {
  double dist2;
  double target;
  bool operator<(const Neighbour& o) const {
    return dist2 < o.dist2 || (dist2 == o.dist2 && target < o.target);
  }
};

// Mean target over the m nearest of `sorted` (ascending). Points tied at the
// m-th distance share the remaining weight equally, so the result does not
// depend on how ties would be broken.
double tie_weighted_mean(const std::vector<Neighbour>& sorted, std::size_t m) {
  const double dm = sorted[m - 1].dist2;
  double below = 0.0;
  std::size_t n_below = 0;
  double tied = 0.0;
  std::size_t n_tied = 0;
  for (const auto& nb : sorted) {
    if (nb.dist2 < dm) {
      below += nb.target;
      ++n_below;
    } else if (nb.dist2 == dm) {
      tied += nb.target;
      ++n_tied;
    } else {
      break;
    }
  }
  const double share = static_cast<double>(m - n_below) / static_cast<double>(n_tied);
  return (below + share * tied) / static_cast<double>(m);
}

struct Standardized {
  std::vector<double> rows;  // row-major, n x d
  std::size_t d = 0;
  bool dropped = false;
};

Standardized standardize(const Eigen::MatrixXd& x) {
  Standardized out;
  const auto n = x.rows();
  std::vector<Eigen::Index> keep;
  std::vector<double> mean, sd;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    // Sorted summation keeps the scaling independent of path order.
    std::vector<double> col(x.col(j).data(), x.col(j).data() + n);
    std::sort(col.begin(), col.end());
    const double m = pairwise_sum(col) / static_cast<double>(n);
    for (double& v : col) v = (v - m) * (v - m);
    std::sort(col.begin(), col.end());
    const double var = n > 1 ? pairwise_sum(col) / static_cast<double>(n - 1) : 0.0;
    const double s = std::sqrt(var);
    if (!(s > 1e-12 * (1.0 + std::abs(m)))) {
      out.dropped = true;
      continue;
    }
    keep.push_back(j);
    mean.push_back(m);
    sd.push_back(s);
  }
  out.d = keep.size();
  out.rows.resize(static_cast<std::size_t>(n) * out.d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < out.d; ++a) {
      out.rows[static_cast<std::size_t>(i) * out.d + a] = (x(i, keep[a]) - mean[a]) / sd[a];
    }
  }
  return out;
}

void knn_fit(const Standardized& z, std::span<const double> y, std::size_t k,
             std::vector<double>& loo, std::vector<double>& in_sample) {
  const std::size_t n = y.size();
  const std::size_t d = z.d;
  k = std::clamp<std::size_t>(k, 1, n - 1);
  loo.assign(n, 0.0);
  in_sample.assign(n, 0.0);
  parallel_for(n, [&](std::size_t q) {
    std::vector<double> dist(n);
    const double* zq = z.rows.data() + q * d;
    for (std::size_t j = 0; j < n; ++j) {
      const double* zj = z.rows.data() + j * d;
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        const double diff = zq[a] - zj[a];
        s += diff * diff;
      }
      dist[j] = s;
    }
    dist[q] = INFINITY;
    std::vector<double> scratch(dist);
    std::nth_element(scratch.begin(), scratch.begin() + static_cast<long>(k - 1), scratch.end());
    const double dk = scratch[k - 1];
    std::vector<Neighbour> cand;
    cand.reserve(k + 8);
    for (std::size_t j = 0; j < n; ++j) {
      if (dist[j] <= dk) cand.push_back({dist[j], y[j]});
    }
    std::sort(cand.begin(), cand.end());
    loo[q] = tie_weighted_mean(cand, k);
    cand.push_back({0.0, y[q]});
    std::sort(cand.begin(), cand.end());
    in_sample[q] = tie_weighted_mean(cand, k);
  });
}

double mean_abs_diff(std::span<const double> a, std::span<const double> b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = std::abs(a[i] - b[i]);
  return pairwise_sum(d) / static_cast<double>(std::max<std::size_t>(1, d.size()));
}

}  // namespace

SigmaFieldSpec make_tap_spec(std::string label, double t, std::vector<Tap> taps) {
  SigmaFieldSpec spec;
  spec.label = std::move(label);
  spec.time = t;
  for (const auto& tap : taps) {
    if (!tap.ensemble && !tap.scalars) throw InvalidArgument("tap '" + tap.name + "' has no source");
    if (tap.ensemble && tap.time > t + kTimeTol * std::max(1.0, t)) {
      throw InvalidArgument("tap '" + tap.name + "' reads the path after the observation time");
    }
    spec.feature_names.push_back(tap.name);
  }
  struct Resolved {
    const PathEnsemble* ensemble;
    std::size_t index;
    const std::vector<double>* scalars;
  };
  std::vector<Resolved> resolved;
  for (const auto& tap : taps) {
    resolved.push_back({tap.ensemble, tap.ensemble ? tap.ensemble->grid().index_at_or_below(tap.time) : 0,
                        tap.scalars});
  }
  spec.extract = [resolved](std::size_t path, std::span<double> out) {
    for (std::size_t a = 0; a < resolved.size(); ++a) {
      const auto& r = resolved[a];
      out[a] = r.ensemble ? r.ensemble->value(path, r.index) : (*r.scalars)[path];
    }
  };
  return spec;
}

SigmaFieldSpec make_discretized_spec(std::string label, const PathEnsemble& ensemble,
                                     const Subdivision& pi, double t,
                                     const std::vector<double>& argument_times) {
  const auto& grid = ensemble.grid();
  const Subdivision snapped = pi.snapped_to(grid);
  const auto pts = snapped.points();
  const double tol = kTimeTol * std::max(1.0, grid.horizon());
  std::vector<Tap> taps;
  std::vector<double> used;
  auto add = [&](double when) {
    for (double u : used) {
      if (std::abs(u - when) <= tol) return;
    }
    used.push_back(when);
    taps.push_back({"X@" + std::to_string(when), &ensemble, when, nullptr});
  };
  for (double u : argument_times) {
    // Largest skeleton point <= min(u, t).
    const double cap = std::min(u, t);
    std::size_t j = 0;
    while (j + 1 < pts.size() && pts[j + 1] <= cap + tol) ++j;
    add(pts[j]);
    if (std::abs(pts[j] - u) <= tol) continue;
    if (j + 1 < pts.size() && pts[j + 1] <= t + tol) add(pts[j + 1]);
  }
  return make_tap_spec(std::move(label), t, std::move(taps));
}

SigmaFieldSpec make_running_max_spec(std::string label, const PathEnsemble& ensemble,
                                     const Subdivision& pi, double t,
                                     const std::vector<double>& max_times) {
  const auto& grid = ensemble.grid();
  const Subdivision snapped = pi.snapped_to(grid);
  const double tol = kTimeTol * std::max(1.0, grid.horizon());
  std::vector<std::size_t> idx;
  for (double u : snapped.points()) {
    if (u <= t + tol) idx.push_back(grid.index_at_or_below(u));
  }
  if (idx.empty()) throw InvalidArgument("no subdivision point at or before t");
  if (!max_times.empty()) {
    std::vector<std::size_t> allowed;
    for (double u : max_times) {
      if (!std::isfinite(u) || u < -tol) throw InvalidArgument("max_times must be finite and non-negative");
      if (u <= grid.horizon() + tol) allowed.push_back(grid.index_at_or_below(std::min(u, grid.horizon())));
    }
    std::sort(allowed.begin(), allowed.end());
    // Keep the first point (time 0) and the last; filter the interior.
    std::vector<std::size_t> kept{idx.front()};
    for (std::size_t i = 1; i + 1 < idx.size(); ++i) {
      if (std::binary_search(allowed.begin(), allowed.end(), idx[i])) kept.push_back(idx[i]);
    }
    if (idx.size() > 1) kept.push_back(idx.back());
    idx = std::move(kept);
  }
  SigmaFieldSpec spec;
  spec.label = std::move(label);
  spec.time = t;
  spec.feature_names = {"last", "max before"};
  const PathEnsemble* e = &ensemble;
  spec.extract = [e, idx](std::size_t p, std::span<double> out) {
    out[0] = e->value(p, idx.back());
    double m = e->value(p, idx.front());
    for (std::size_t i = 1; i + 1 < idx.size(); ++i) m = std::max(m, e->value(p, idx[i]));
    out[1] = m;
  };
  return spec;
}

Eigen::MatrixXd feature_matrix(const SigmaFieldSpec& spec, std::size_t path_count) {
  if (!spec.extract) throw InvalidArgument("sigma-field spec has no extractor");
  const std::size_t d = spec.dim();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(path_count), static_cast<Eigen::Index>(d));
  std::vector<double> buf(path_count * d);
  parallel_for(path_count, [&](std::size_t p) {
    std::span<double> out(buf.data() + p * d, d);
    spec.extract(p, out);
    for (double v : out) {
      if (!std::isfinite(v)) throw NumericalFailure("non-finite feature in '" + spec.label + "'", p);
    }
  });
  for (std::size_t p = 0; p < path_count; ++p) {
    for (std::size_t a = 0; a < d; ++a) {
      x(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(a)) = buf[p * d + a];
    }
  }
  return x;
}

std::string to_string(RegressionMethod m) {
  return m == RegressionMethod::kKnn ? "knn" : "least-squares";
}

std::size_t default_neighbour_count(std::size_t n) {
  return static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(n), 0.8) / 10.0));
}

RegressionEstimate estimate_conditional_expectation(std::span<const double> targets,
                                                    const Eigen::MatrixXd& features,
                                                    const RegressionConfig& cfg) {
  const std::size_t n = targets.size();
  if (n < cfg.min_paths) {
    throw InvalidArgument("regression needs at least " + std::to_string(cfg.min_paths) + " paths");
  }
  if (static_cast<std::size_t>(features.rows()) != n) {
    throw InvalidArgument("feature rows differ from the number of targets");
  }
  for (double v : targets) {
    if (!std::isfinite(v)) throw InvalidArgument("targets must be finite");
  }
  RegressionEstimate est;
  est.method = to_string(cfg.method);

  const Standardized z = standardize(features);
  est.dropped_columns = z.dropped;
  if (z.d == 0) {
    const double mean = pairwise_sum(targets) / static_cast<double>(n);
    est.fitted.assign(n, mean);
    est.degenerate_features = true;
    est.method += " (mean fallback)";
    est.in_sample_l1 = mean_abs_diff(targets, est.fitted);
    // Leave-one-out mean.
    std::vector<double> loo(n);
    const double total = pairwise_sum(targets);
    for (std::size_t i = 0; i < n; ++i) loo[i] = (total - targets[i]) / static_cast<double>(n - 1);
    est.cross_fitted_l1 = mean_abs_diff(targets, loo);
    return est;
  }

  if (cfg.method == RegressionMethod::kKnn) {
    const std::size_t k = cfg.k ? cfg.k : default_neighbour_count(n);
    std::vector<double> loo, in_sample;
    knn_fit(z, targets, k, loo, in_sample);
    est.method += " (k=" + std::to_string(std::min(k, n - 1)) + ")";
    est.in_sample_l1 = mean_abs_diff(targets, in_sample);
    est.cross_fitted_l1 = mean_abs_diff(targets, loo);
    est.fitted = cfg.cross_fit ? std::move(loo) : std::move(in_sample);
    return est;
  }

  const auto rows = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd design(rows, features.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(features.cols()) = features;
  Eigen::VectorXd y(rows);
  for (Eigen::Index i = 0; i < rows; ++i) y(i) = targets[static_cast<std::size_t>(i)];
  const LinearFit fit = ordinary_least_squares(design, y);
  est.dropped_columns = fit.dropped_columns;
  est.fitted.resize(n);
  std::vector<double> loo(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    est.fitted[i] = fit.fitted(ii);
    const double slack = 1.0 - fit.leverage(ii);
    loo[i] = slack > 1e-12 ? targets[i] - fit.residuals(ii) / slack : fit.fitted(ii);
  }
  est.in_sample_l1 = mean_abs_diff(targets, est.fitted);
  est.cross_fitted_l1 = mean_abs_diff(targets, loo);
  return est;
}

RegressionEstimate estimate_conditional_expectation(std::span<const double> targets,
                                                    const SigmaFieldSpec& spec,
                                                    const RegressionConfig& cfg) {
  return estimate_conditional_expectation(targets, feature_matrix(spec, targets.size()), cfg);
}

std::vector<ConvergenceRow> weak_convergence_report(std::span<const double> targets,
                                                    const std::vector<SigmaFieldSpec>& specs,
                                                    const std::vector<int>& levels, double eta,
                                                    const RegressionConfig& cfg) {
  if (specs.size() < 2) throw InvalidArgument("weak convergence report needs at least 2 levels");
  if (levels.size() != specs.size()) throw InvalidArgument("one level label per spec");
  if (!(eta > 0.0)) throw InvalidArgument("threshold must be positive");
  for (const auto& s : specs) {
    if (std::abs(s.time - specs.front().time) > kTimeTol) {
      throw InvalidArgument("all specs must share the observation time");
    }
  }
  const std::size_t n = targets.size();
  std::vector<ConvergenceRow> rows;
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const auto est = estimate_conditional_expectation(targets, specs[l], cfg);
    std::vector<double> miss(n);
    for (std::size_t p = 0; p < n; ++p) miss[p] = std::abs(est.fitted[p] - targets[p]) > eta ? 1.0 : 0.0;
    const double d = pairwise_sum(miss) / static_cast<double>(n);
    rows.push_back({levels[l], specs[l].label, d, std::sqrt(d * (1.0 - d) / static_cast<double>(n)),
                    est.cross_fitted_l1});
  }
  return rows;
}

std::size_t count_increases(const std::vector<ConvergenceRow>& rows) {
  std::vector<double> d;
  for (const auto& r : rows) d.push_back(r.distance);
  return count_inversions(d);
}

std::vector<double> approximate_stopping_time(std::span<const double> tau,
                                              const std::vector<double>& times,
                                              const std::vector<SigmaFieldSpec>& specs,
                                              const RegressionConfig& cfg) {
  if (times.empty()) throw InvalidArgument("stopping time needs at least one value");
  if (specs.size() != times.size()) throw InvalidArgument("one feature spec per stopping value");
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    if (!(times[i + 1] > times[i])) throw InvalidArgument("stopping values must increase");
  }
  const std::size_t n = tau.size();
  const double tol = kTimeTol * std::max(1.0, times.back());
  std::vector<std::size_t> which(n);
  for (std::size_t p = 0; p < n; ++p) {
    auto it = std::lower_bound(times.begin(), times.end(), tau[p] - tol);
    if (it == times.end() || std::abs(*it - tau[p]) > tol) {
      throw InvalidArgument("stopping time value off the declared grid on path " + std::to_string(p));
    }
    which[p] = static_cast<std::size_t>(it - times.begin());
  }
  std::vector<double> out(n, times.back());
  std::vector<bool> settled(n, false);
  std::vector<double> indicator(n);
  for (std::size_t i = 0; i < times.size(); ++i) {
    for (std::size_t p = 0; p < n; ++p) indicator[p] = which[p] == i ? 1.0 : 0.0;
    const double hits = pairwise_sum(indicator);
    std::vector<double> fitted;
    if (hits == 0.0 || hits == static_cast<double>(n)) {
      fitted.assign(n, hits == 0.0 ? 0.0 : 1.0);
    } else {
      fitted = estimate_conditional_expectation(indicator, specs[i], cfg).fitted;
    }
    for (std::size_t p = 0; p < n; ++p) {
      if (!settled[p] && fitted[p] > 0.5) {
        out[p] = times[i];
        settled[p] = true;
      }
    }
  }
  return out;
}

std::vector<double> first_passage_times(const PathEnsemble& ensemble,
                                        const std::vector<double>& times, double level) {
  if (times.empty()) throw InvalidArgument("first passage needs candidate times");
  std::vector<double> out(ensemble.path_count(), times.back());
  for (std::size_t p = 0; p < ensemble.path_count(); ++p) {
    for (double t : times) {
      if (ensemble.value_at(p, t) > level) {
        out[p] = t;
        break;
      }
    }
  }
  return out;
}

void PointProcessSpec::validate() const {
  if (!jump_time || !mark) throw InvalidArgument("point process needs jump time and mark samplers");
  if (!(horizon > 0.0)) throw InvalidArgument("point process horizon must be positive");
  if (!(mark_mean >= 0.0) || !std::isfinite(mark_mean)) {
    throw InvalidArgument("declared mark mean must be finite");
  }
  if (max_index == 0) throw InvalidArgument("point process needs at least one point");
}

PointProcessSpec preset_point_process(std::size_t truncation, std::size_t max_index) {
  PointProcessSpec spec;
  spec.jump_time = [](std::size_t i, RandomStream& s) {
    const double di = static_cast<double>(i);
    return s.exponential(1.0 / (di * di));
  };
  spec.mark = [](std::size_t, RandomStream& s) { return s.exponential(1.0); };
  spec.mark_mean = 1.0;
  spec.truncation = truncation;
  spec.horizon = 1.0;
  spec.max_index = max_index;
  return spec;
}

PointProcessSample truncate_point_process(const PointProcessSpec& spec, const TimeGrid& grid,
                                          const RngContract& rng, std::size_t paths) {
  spec.validate();
  if (std::abs(grid.horizon() - spec.horizon) > kTimeTol * std::max(1.0, spec.horizon)) {
    throw InvalidArgument("grid horizon differs from the point process horizon");
  }
  if (paths == 0) throw InvalidArgument("need at least one path");
  struct Hit {
    double time;
    double mark;
    std::size_t index;
  };
  std::vector<std::vector<Hit>> hits(paths);
  std::vector<double> abs_mark_sum(paths, 0.0);
  parallel_for(paths, [&](std::size_t p) {
    auto times = rng.stream(p, StreamPurpose::kJumpTimes);
    auto marks = rng.stream(p, StreamPurpose::kMarks);
    double abs_sum = 0.0;
    for (std::size_t i = 1; i <= spec.max_index; ++i) {
      const double tau = spec.jump_time(i, times);
      const double x = spec.mark(i, marks);
      if (!(tau > 0.0) || std::isnan(tau)) {
        throw NumericalFailure("jump time must be strictly positive (index " + std::to_string(i) + ")", p);
      }
      if (!std::isfinite(x)) throw NumericalFailure("non-finite mark (index " + std::to_string(i) + ")", p);
      abs_sum += std::abs(x);
      if (tau <= spec.horizon) hits[p].push_back({tau, x, i});
    }
    abs_mark_sum[p] = abs_sum;
    std::sort(hits[p].begin(), hits[p].end(),
              [](const Hit& a, const Hit& b) { return a.time < b.time || (a.time == b.time && a.index < b.index); });
  });

  const double abs_mean = pairwise_sum(abs_mark_sum) /
                          (static_cast<double>(paths) * static_cast<double>(spec.max_index));
  if (!std::isfinite(abs_mean) || abs_mean > 100.0 * (1.0 + spec.mark_mean)) {
    throw NumericalFailure("marks do not look integrable: running mean of |X| is " +
                           std::to_string(abs_mean));
  }

  auto fill = [&](bool truncated) {
    return PathEnsemble::generate(grid, rng.master_seed, paths, [&](std::size_t p, std::span<double> row) {
      std::size_t h = 0;
      double level = 0.0;
      for (std::size_t k = 0; k < grid.size(); ++k) {
        while (h < hits[p].size() && hits[p][h].time <= grid[k]) {
          if (!truncated || hits[p][h].index <= spec.truncation) level += hits[p][h].mark;
          ++h;
        }
        row[k] = level;
      }
    });
  };

  PointProcessSample out{fill(false), fill(true), std::vector<double>(paths, 0.0),
                         std::vector<double>(spec.max_index, 0.0), 0};
  std::vector<std::size_t> counts(spec.max_index, 0);
  for (std::size_t p = 0; p < paths; ++p) {
    double running = 0.0;
    double sup = 0.0;
    for (const auto& hit : hits[p]) {
      ++counts[hit.index - 1];
      if (hit.index > spec.truncation) {
        running += hit.mark;
        sup = std::max(sup, std::abs(running));
      }
    }
    out.sup_distance[p] = sup;
    out.max_realized_jumps = std::max(out.max_realized_jumps, hits[p].size());
  }
  for (std::size_t i = 0; i < spec.max_index; ++i) {
    out.hit_probability[i] = static_cast<double>(counts[i]) / static_cast<double>(paths);
  }
  return out;
}

double point_process_tail_bound(const PointProcessSpec& spec, const PointProcessSample& sample,
                                double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("threshold must be positive");
  double tail = 0.0;
  for (std::size_t i = spec.truncation; i < sample.hit_probability.size(); ++i) {
    tail += sample.hit_probability[i];
  }
  return spec.mark_mean / eta * tail;
}

}  // namespace fexp
