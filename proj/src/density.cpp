#include "fexp/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "fexp/errors.hpp"

namespace fexp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_positive_time(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw InvalidArgument("transition time must be positive");
}

double integrate(const std::function<double(double)>& f, double a, double b, std::size_t depth) {
  if (a == b) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b,
                                                                       static_cast<unsigned>(depth),
                                                                       1e-12);
}

double inverse_sigma(const SdeCoefficients& coeffs, double y) {
  const double s = coeffs.sigma(y);
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw DomainViolation("sigma <= 0 at y = " + std::to_string(y));
  }
  return 1.0 / s;
}

double mu_at_state(const SdeCoefficients& coeffs, double x) {
  return coeffs.b(x) / coeffs.sigma(x) - 0.5 * coeffs.sigma_prime(x);
}

// Cubic Hermite on [x0, x1] with values f0, f1 and slopes d0, d1.
double hermite(double x, double x0, double x1, double f0, double f1, double d0, double d1) {
  const double h = x1 - x0;
  const double u = (x - x0) / h;
  const double u2 = u * u;
  const double u3 = u2 * u;
  return (2 * u3 - 3 * u2 + 1) * f0 + (u3 - 2 * u2 + u) * h * d0 + (-2 * u3 + 3 * u2) * f1 +
         (u3 - u2) * h * d1;
}

bool detect_standard_brownian(const SdeCoefficients& c) {
  for (int i = 0; i <= 256; ++i) {
    const double x = c.domain_lo + (c.domain_hi - c.domain_lo) * i / 256.0;
    if (c.b(x) != 0.0 || c.sigma(x) != 1.0) return false;
  }
  return true;
}

template <class H>
double exponent_along(const H& h, double t, double x, double y, std::span<const double> w) {
  const std::size_t m = w.size() - 1;
  const double dz = 1.0 / static_cast<double>(m);
  const double st = std::sqrt(t);
  double acc = 0.5 * (h(x + st * w[0]) + h(y + st * w[m]));
  for (std::size_t j = 1; j < m; ++j) {
    const double z = static_cast<double>(j) * dz;
    acc += h(x + z * (y - x) + st * w[j]);
  }
  return -t * acc * dz;
}

template <class H>
MeanEstimate bridge_expectation_impl(const H& h, double t, double x, double y,
                                     const BridgeSample& bridges) {
  std::vector<double> vals(bridges.samples());
  for (std::size_t i = 0; i < bridges.samples(); ++i) {
    const double e = exponent_along(h, t, x, y, bridges.row(i));
    if (!std::isfinite(e)) {
      throw NumericalFailure("non-finite exponent in bridge expectation at inner sample " +
                                 std::to_string(i),
                             i);
    }
    vals[i] = std::exp(e);
  }
  return summarize(vals);
}

}  // namespace

double gaussian_density(double t, double x, double y) {
  require_positive_time(t);
  const double d = y - x;
  return std::exp(-d * d / (2.0 * t)) / std::sqrt(kTwoPi * t);
}

double gaussian_score(double t, double x, double y) {
  require_positive_time(t);
  return (y - x) / t;
}

double lamperti_transform(const SdeCoefficients& coeffs, double x) {
  if (!std::isfinite(x)) throw InvalidArgument("lamperti transform of a non-finite point");
  // Sample first so that a sign change of sigma cannot hide between
  // quadrature nodes.
  for (int i = 0; i <= 64; ++i) inverse_sigma(coeffs, x * i / 64.0);
  return integrate([&](double y) { return inverse_sigma(coeffs, y); }, 0.0, x, 15);
}

double lamperti_inverse(const SdeCoefficients& coeffs, double z) {
  if (!std::isfinite(z)) throw InvalidArgument("lamperti inverse of a non-finite point");
  if (z == 0.0) return 0.0;
  auto f = [&](double x) { return lamperti_transform(coeffs, x) - z; };
  double lo = 0.0;
  double hi = 0.0;
  double step = std::max(1.0, std::abs(z) * coeffs.sigma(0.0));
  const double dir = z > 0 ? 1.0 : -1.0;
  for (int k = 0; k < 60; ++k) {
    const double cand = dir * step;
    if (f(cand) * dir >= 0.0) {
      lo = std::min(0.0, cand);
      hi = std::max(0.0, cand);
      break;
    }
    step *= 2.0;
    if (k == 59) throw NumericalFailure("could not bracket the Lamperti inverse");
  }
  boost::uintmax_t iters = 200;
  auto [a, b] = boost::math::tools::toms748_solve(
      f, lo, hi, boost::math::tools::eps_tolerance<double>(50), iters);
  return 0.5 * (a + b);
}

double drift_mu(const SdeCoefficients& coeffs, double z) {
  return mu_at_state(coeffs, lamperti_inverse(coeffs, z));
}

LampertiMap::LampertiMap(SdeCoefficients coeffs, std::size_t cells) : coeffs_(std::move(coeffs)) {
  coeffs_.validate();
  sigma_const_ = coeffs_.sigma(coeffs_.domain_lo);
  constant_sigma_ = true;
  for (int i = 0; i <= 256; ++i) {
    const double x = coeffs_.domain_lo + (coeffs_.domain_hi - coeffs_.domain_lo) * i / 256.0;
    if (coeffs_.sigma(x) != sigma_const_) {
      constant_sigma_ = false;
      break;
    }
  }
  if (constant_sigma_) return;
  if (cells < 16) cells = 16;
  const double lo = coeffs_.domain_lo;
  const double dx = (coeffs_.domain_hi - lo) / static_cast<double>(cells);
  x_nodes_.resize(cells + 1);
  s_nodes_.resize(cells + 1);
  sigma_nodes_.resize(cells + 1);
  for (std::size_t k = 0; k <= cells; ++k) {
    x_nodes_[k] = lo + dx * static_cast<double>(k);
    sigma_nodes_[k] = coeffs_.sigma(x_nodes_[k]);
  }
  x_nodes_.back() = coeffs_.domain_hi;
  s_nodes_[0] = lamperti_transform(coeffs_, lo);
  auto inv = [&](double y) { return inverse_sigma(coeffs_, y); };
  for (std::size_t k = 1; k <= cells; ++k) {
    s_nodes_[k] = s_nodes_[k - 1] + boost::math::quadrature::gauss<double, 15>::integrate(
                                        inv, x_nodes_[k - 1], x_nodes_[k]);
  }
}

double LampertiMap::s(double x) const {
  if (constant_sigma_) return x / sigma_const_;
  if (x < x_nodes_.front() || x > x_nodes_.back()) return lamperti_transform(coeffs_, x);
  const double dx = x_nodes_[1] - x_nodes_[0];
  std::size_t k = static_cast<std::size_t>((x - x_nodes_[0]) / dx);
  k = std::min(k, x_nodes_.size() - 2);
  return hermite(x, x_nodes_[k], x_nodes_[k + 1], s_nodes_[k], s_nodes_[k + 1],
                 1.0 / sigma_nodes_[k], 1.0 / sigma_nodes_[k + 1]);
}

double LampertiMap::g(double z) const {
  if (constant_sigma_) return z * sigma_const_;
  if (z < s_nodes_.front() || z > s_nodes_.back()) return lamperti_inverse(coeffs_, z);
  auto it = std::upper_bound(s_nodes_.begin(), s_nodes_.end(), z);
  std::size_t k = it == s_nodes_.begin() ? 0 : static_cast<std::size_t>(it - s_nodes_.begin()) - 1;
  k = std::min(k, s_nodes_.size() - 2);
  return hermite(z, s_nodes_[k], s_nodes_[k + 1], x_nodes_[k], x_nodes_[k + 1], sigma_nodes_[k],
                 sigma_nodes_[k + 1]);
}

double LampertiMap::mu(double z) const { return mu_at_state(coeffs_, g(z)); }

std::string to_string(HVariant v) { return v == HVariant::kStandard ? "standard" : "as-printed"; }

HVariant parse_h_variant(const std::string& name) {
  if (name == "standard") return HVariant::kStandard;
  if (name == "as-printed") return HVariant::kAsPrinted;
  throw InvalidArgument("unknown h variant '" + name + "'");
}

void ZmirouConfig::validate() const {
  if (inner_samples < 100) throw InvalidArgument("Zmirou inner sample count must be >= 100");
  if (bridge_steps < 1) throw InvalidArgument("bridge grid needs at least one step");
  if (!(fd_scale > 0.0)) throw InvalidArgument("finite-difference scale must be positive");
  if (quadrature_depth < 1) throw InvalidArgument("quadrature depth must be positive");
}

BridgeSample::BridgeSample(std::size_t samples, std::size_t steps, const RngContract& rng)
    : samples_(samples), steps_(steps), data_(samples * (steps + 1)) {
  if (steps == 0) throw InvalidArgument("bridge grid needs at least one step");
  const double sd = std::sqrt(1.0 / static_cast<double>(steps));
  parallel_for(samples, [&](std::size_t i) {
    auto stream = rng.stream(i, StreamPurpose::kBridge);
    double* row = data_.data() + i * (steps + 1);
    row[0] = 0.0;
    for (std::size_t j = 0; j < steps; ++j) row[j + 1] = row[j] + sd * stream.normal();
    const double end = row[steps];
    for (std::size_t j = 0; j <= steps; ++j) {
      row[j] -= static_cast<double>(j) / static_cast<double>(steps) * end;
    }
    row[steps] = 0.0;
  });
}

MeanEstimate bridge_expectation(const std::function<double(double)>& h, double t, double x,
                                double y, const BridgeSample& bridges) {
  require_positive_time(t);
  return bridge_expectation_impl(h, t, x, y, bridges);
}

ZmirouModel::ZmirouModel(const SdeCoefficients& coeffs, ZmirouConfig cfg, const RngContract& rng)
    : cfg_((cfg.validate(), cfg)),
      map_(coeffs),
      standard_brownian_(detect_standard_brownian(coeffs)),
      bridges_(standard_brownian_ ? 0 : cfg.inner_samples, cfg.bridge_steps, rng) {
  if (standard_brownian_) return;
  // h is tabulated on the Lamperti image of the declared domain with a step
  // of about 1e-3; linear interpolation then costs O(1e-7 h'') per lookup.
  table_lo_ = map_.s(coeffs.domain_lo);
  const double hi = map_.s(coeffs.domain_hi);
  const std::size_t cells =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil((hi - table_lo_) / 1e-3)), 16,
                              400000);
  table_step_ = (hi - table_lo_) / static_cast<double>(cells);
  h_table_.resize(cells + 1);
  for (std::size_t k = 0; k <= cells; ++k) {
    h_table_[k] = h_direct(table_lo_ + table_step_ * static_cast<double>(k));
    if (!std::isfinite(h_table_[k])) {
      throw NumericalFailure("h is not finite on the Lamperti domain", k);
    }
  }
}

double ZmirouModel::h_direct(double z) const {
  const double m = map_.mu(z);
  const double d = 1e-4 * (1.0 + std::abs(z));
  const double dm = (map_.mu(z + d) - map_.mu(z - d)) / (2.0 * d);
  if (cfg_.h_variant == HVariant::kStandard) return 0.5 * (m * m + dm);
  return 0.5 * (m * m + dm * dm);
}

double ZmirouModel::h(double z) const {
  if (standard_brownian_) return 0.0;
  const double u = (z - table_lo_) / table_step_;
  if (!(u >= 0.0) || u >= static_cast<double>(h_table_.size() - 1)) return h_direct(z);
  const auto k = static_cast<std::size_t>(u);
  const double frac = u - static_cast<double>(k);
  return h_table_[k] + frac * (h_table_[k + 1] - h_table_[k]);
}

double ZmirouModel::primitive_difference(double from, double to) const {
  return integrate([&](double z) { return map_.mu(z); }, from, to, cfg_.quadrature_depth);
}

DensityValue ZmirouModel::density(double t, double x, double y) const {
  require_positive_time(t);
  if (standard_brownian_) return {gaussian_density(t, x, y), 0.0};
  const double sx = map_.s(x);
  const double sy = map_.s(y);
  const auto hv = bridge_expectation_impl([this](double z) { return h(z); }, t, sx, sy, bridges_);
  const double d = sy - sx;
  const double prefactor = std::exp(-d * d / (2.0 * t) + primitive_difference(sx, sy)) /
                           (std::sqrt(kTwoPi * t) * map_.coefficients().sigma(y));
  const DensityValue out{prefactor * hv.mean, prefactor * hv.std_error};
  if (!std::isfinite(out.value)) throw NumericalFailure("non-finite Zmirou density");
  return out;
}

ScoreValue ZmirouModel::score(double t, double x, double y) const {
  require_positive_time(t);
  if (standard_brownian_) return {gaussian_score(t, x, y), 0.0};
  const double sx = map_.s(x);
  const double sy = map_.s(y);
  const double delta = cfg_.fd_scale * (1.0 + std::abs(sx));
  const std::size_t n = bridges_.samples();
  auto hf = [this](double z) { return h(z); };
  std::vector<double> e0(n), diff(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto w = bridges_.row(i);
    const double a = exponent_along(hf, t, sx, sy, w);
    const double up = exponent_along(hf, t, sx + delta, sy, w);
    const double dn = exponent_along(hf, t, sx - delta, sy, w);
    if (!std::isfinite(a) || !std::isfinite(up) || !std::isfinite(dn)) {
      throw NumericalFailure("non-finite exponent in Zmirou score at inner sample " +
                                 std::to_string(i),
                             i);
    }
    e0[i] = std::exp(a);
    diff[i] = (std::exp(up) - std::exp(dn)) / (2.0 * delta);
  }
  const double hmean = pairwise_sum(e0) / static_cast<double>(n);
  const double dmean = pairwise_sum(diff) / static_cast<double>(n);
  const double ratio = dmean / hmean;
  // Delta method for the ratio of means.
  std::vector<double> infl(n);
  for (std::size_t i = 0; i < n; ++i) infl[i] = (diff[i] - ratio * e0[i]) / hmean;
  const double ratio_se = std::sqrt(sample_variance(infl) / static_cast<double>(n));

  const double sig = map_.coefficients().sigma(x);
  const double value = ((sy - sx) / t + ratio - map_.mu(sx)) / sig;
  if (!std::isfinite(value)) throw NumericalFailure("non-finite Zmirou score");
  return {value, ratio_se / sig};
}

DensityValue zmirou_density(const SdeCoefficients& coeffs, double t, double x, double y,
                            const ZmirouConfig& cfg, const RngContract& rng) {
  return ZmirouModel(coeffs, cfg, rng).density(t, x, y);
}

ScoreValue zmirou_score(const SdeCoefficients& coeffs, double t, double x, double y,
                        const ZmirouConfig& cfg, const RngContract& rng) {
  return ZmirouModel(coeffs, cfg, rng).score(t, x, y);
}

std::string to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::kGaussian: return "gaussian";
    case ScoreKind::kZmirou: return "zmirou";
    case ScoreKind::kUser: return "user";
  }
  return "user";
}

ScoreFunction::ScoreFunction(ScoreKind kind, Evaluator evaluator)
    : kind_(kind), evaluator_(std::move(evaluator)) {
  if (!evaluator_) throw InvalidArgument("score function needs an evaluator");
}

ScoreFunction gaussian_score_function() {
  return ScoreFunction(ScoreKind::kGaussian, [](double t, double x, double y) {
    return ScoreValue{gaussian_score(t, x, y), 0.0};
  });
}

ScoreFunction zero_score_function() {
  return ScoreFunction(ScoreKind::kUser, [](double, double, double) { return ScoreValue{}; });
}

ScoreFunction zmirou_score_function(std::shared_ptr<const ZmirouModel> model) {
  if (!model) throw InvalidArgument("null Zmirou model");
  return ScoreFunction(ScoreKind::kZmirou,
                       [m = std::move(model)](double t, double x, double y) { return m->score(t, x, y); });
}

MeanEstimate estimate_phi(const ScoreFunction& score, const PathEnsemble& ensemble, double s,
                          double t) {
  if (!(s < t)) throw InvalidArgument("estimate_phi needs s < t");
  if (s < 0.0 || t > ensemble.grid().horizon() * (1.0 + 1e-12)) {
    throw InvalidArgument("estimate_phi times outside the ensemble horizon");
  }
  const auto& grid = ensemble.grid();
  const std::size_t is = grid.index_at_or_below(s);
  const std::size_t it = grid.index_at_or_below(t);
  const double lag = grid[it] - grid[is];
  if (!(lag > 0.0)) throw InvalidArgument("s and t fall on the same grid time");
  std::vector<double> vals(ensemble.path_count());
  parallel_for(ensemble.path_count(), [&](std::size_t p) {
    vals[p] = std::abs(score(lag, ensemble.value(p, is), ensemble.value(p, it)).value);
  });
  return summarize(vals);
}

double fit_score_bound(const ScoreFunction& score, const LampertiMap& map,
                       std::span<const ScorePoint> sweep) {
  double m = 0.0;
  for (const auto& pt : sweep) {
    const double v = std::abs(score(pt.t, pt.x, pt.y).value);
    const double scale = 1.0 + std::abs(map.s(pt.y) - map.s(pt.x)) / pt.t;
    m = std::max(m, v / scale);
  }
  return m;
}

}  // namespace fexp
