#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fexp/core.hpp"
#include "fexp/rng.hpp"
#include "fexp/simulate.hpp"
#include "fexp/stats.hpp"

namespace fexp {

// ---------------------------------------------------------------------------
// Gaussian heat kernel
// ---------------------------------------------------------------------------

double gaussian_density(double t, double x, double y);
/// (1/p) dp/dx of the Gaussian kernel, i.e. (y - x) / t.
double gaussian_score(double t, double x, double y);

// ---------------------------------------------------------------------------
// Lamperti transform s(x) = int_0^x 1/sigma
// ---------------------------------------------------------------------------

/// Adaptive Gauss-Kronrod quadrature of 1/sigma from 0 to x. Throws
/// DomainViolation when sigma <= 0 is seen on the integration range.
double lamperti_transform(const SdeCoefficients& coeffs, double x);
/// g = s^{-1} by bracketed root finding.
double lamperti_inverse(const SdeCoefficients& coeffs, double z);
/// mu = (b / sigma) o g - sigma' o g / 2, evaluated at z in Lamperti coordinates.
double drift_mu(const SdeCoefficients& coeffs, double z);

/// Tabulated s and g for repeated evaluation. Constant sigma is detected and
/// handled in closed form; otherwise cubic Hermite tables over the declared
/// domain are used, with direct quadrature outside it.
class LampertiMap {
 public:
  explicit LampertiMap(SdeCoefficients coeffs, std::size_t cells = 4096);

  double s(double x) const;
  double g(double z) const;
  double mu(double z) const;
  const SdeCoefficients& coefficients() const { return coeffs_; }
  bool constant_sigma() const { return constant_sigma_; }

 private:
  SdeCoefficients coeffs_;
  bool constant_sigma_ = false;
  double sigma_const_ = 1.0;
  std::vector<double> x_nodes_;
  std::vector<double> s_nodes_;
  std::vector<double> sigma_nodes_;
};

// ---------------------------------------------------------------------------
// Zmirou semi-closed transition density
// ---------------------------------------------------------------------------

enum class HVariant {
  /// h = (mu^2 + mu') / 2, the exponential-of-integral form from Girsanov.
  kStandard,
  /// h = (mu^2 + (mu')^2) / 2.
  kAsPrinted,
};

std::string to_string(HVariant v);
HVariant parse_h_variant(const std::string& name);

struct ZmirouConfig {
  std::size_t inner_samples = 10000;
  /// Steps of the bridge-time grid used for int_0^1 h(...) dz (trapezoid).
  std::size_t bridge_steps = 64;
  /// dH/dx uses delta = fd_scale * (1 + |x|).
  double fd_scale = 1e-3;
  HVariant h_variant = HVariant::kStandard;
  /// Gauss-Kronrod depth for s(x) and A(y) - A(x).
  std::size_t quadrature_depth = 15;

  void validate() const;
};

/// Standard Brownian bridges on [0, 1] sampled on a uniform grid, one row per
/// inner sample.
class BridgeSample {
 public:
  BridgeSample(std::size_t samples, std::size_t steps, const RngContract& rng);

  std::size_t samples() const { return samples_; }
  std::size_t steps() const { return steps_; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * (steps_ + 1), steps_ + 1);
  }

 private:
  std::size_t samples_;
  std::size_t steps_;
  std::vector<double> data_;
};

/// Monte Carlo estimate of E exp(-t int_0^1 h(x + z (y - x) + sqrt(t) W_z) dz)
/// over the sampled bridges. Exposed for direct testing of the estimator.
MeanEstimate bridge_expectation(const std::function<double(double)>& h, double t, double x,
                                double y, const BridgeSample& bridges);

struct DensityValue {
  double value = 0.0;
  double std_error = 0.0;
};

struct ScoreValue {
  double value = 0.0;
  double std_error = 0.0;
};

/// Immutable, thread-safe evaluator for one coefficient set. Bridges are
/// drawn once from `rng`, so all evaluations share common random numbers.
class ZmirouModel {
 public:
  ZmirouModel(const SdeCoefficients& coeffs, ZmirouConfig cfg, const RngContract& rng);

  DensityValue density(double t, double x, double y) const;
  ScoreValue score(double t, double x, double y) const;

  /// True when b == 0 and sigma == 1 were detected on the domain; the
  /// density is then the Gaussian kernel itself.
  bool is_standard_brownian() const { return standard_brownian_; }
  const ZmirouConfig& config() const { return cfg_; }
  double h(double z) const;
  const LampertiMap& lamperti() const { return map_; }

 private:
  double h_direct(double z) const;
  double primitive_difference(double from, double to) const;

  ZmirouConfig cfg_;
  LampertiMap map_;
  bool standard_brownian_ = false;
  BridgeSample bridges_;
  double table_lo_ = 0.0;
  double table_step_ = 0.0;
  std::vector<double> h_table_;
};

DensityValue zmirou_density(const SdeCoefficients& coeffs, double t, double x, double y,
                            const ZmirouConfig& cfg, const RngContract& rng);
ScoreValue zmirou_score(const SdeCoefficients& coeffs, double t, double x, double y,
                        const ZmirouConfig& cfg, const RngContract& rng);

// ---------------------------------------------------------------------------
// Score functions and the phi bound
// ---------------------------------------------------------------------------

enum class ScoreKind { kGaussian, kZmirou, kUser };

std::string to_string(ScoreKind k);

/// (t, x, y) -> (1/p) dp/dx (t, x, y) with a Monte Carlo standard error
/// (zero for closed forms).
class ScoreFunction {
 public:
  using Evaluator = std::function<ScoreValue(double, double, double)>;

  ScoreFunction(ScoreKind kind, Evaluator evaluator);

  ScoreValue operator()(double t, double x, double y) const { return evaluator_(t, x, y); }
  ScoreKind kind() const { return kind_; }

 private:
  ScoreKind kind_;
  Evaluator evaluator_;
};

ScoreFunction gaussian_score_function();
ScoreFunction zero_score_function();
ScoreFunction zmirou_score_function(std::shared_ptr<const ZmirouModel> model);

/// Monte Carlo estimate of E|score(t - s, X_s, X_t)| over the ensemble.
MeanEstimate estimate_phi(const ScoreFunction& score, const PathEnsemble& ensemble, double s,
                          double t);

struct ScorePoint {
  double t;
  double x;
  double y;
};

/// Smallest M with |score| <= M (1 + |s(y) - s(x)| / t) on every sweep point.
double fit_score_bound(const ScoreFunction& score, const LampertiMap& map,
                       std::span<const ScorePoint> sweep);

}  // namespace fexp
