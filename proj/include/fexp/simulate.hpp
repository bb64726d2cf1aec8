#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "fexp/core.hpp"
#include "fexp/rng.hpp"

namespace fexp {

/// Coefficients of dX = b(X) dt + sigma(X) dB on a declared state domain.
struct SdeCoefficients {
  using Fn = std::function<double(double)>;

  std::string name = "custom";
  Fn drift;
  Fn diffusion;
  /// Optional sigma'. When empty, a central difference with step
  /// 1e-5 (1 + |x|) is used.
  Fn diffusion_derivative;
  /// Declared lower bound k > 0 with sigma >= k on the domain.
  double sigma_floor = 1e-3;
  double domain_lo = -10.0;
  double domain_hi = 10.0;

  double b(double x) const { return drift(x); }
  double sigma(double x) const { return diffusion(x); }
  double sigma_prime(double x) const;

  /// Samples the domain and throws DomainViolation if sigma < k or if b or
  /// sigma is not finite somewhere.
  void validate(std::size_t samples = 1001) const;
};

SdeCoefficients brownian_coefficients();
/// b(x) = -x, sigma = 1.
SdeCoefficients ou_coefficients();
/// b(x) = -tanh(x), sigma = 1.
SdeCoefficients sigmoid_drift_coefficients();
/// Preset lookup by name: "brownian", "ou", "bounded-sigmoid-drift".
SdeCoefficients coefficients_preset(const std::string& name);

/// B_0 = 0 with independent N(0, dt) increments drawn from stream
/// (seed, path_index, kBrownian).
Path sample_brownian(const TimeGrid& grid, const RngContract& rng, std::size_t path_index);
void fill_brownian(const TimeGrid& grid, RandomStream& stream, std::span<double> out);
PathEnsemble simulate_brownian(const TimeGrid& grid, const RngContract& rng, std::size_t paths);

/// Euler-Maruyama driven by the supplied Brownian path, so (B, X) share one
/// probability space.
Path euler_maruyama(const SdeCoefficients& coeffs, double x0, const Path& driving,
                    const TimeGrid& grid);
PathEnsemble euler_maruyama(const SdeCoefficients& coeffs, double x0,
                            const PathEnsemble& driving);

/// Z_t = X_{T - t} on the same (symmetric) grid.
Path reverse_path(const Path& x, double horizon);
PathEnsemble reverse_ensemble(const PathEnsemble& x);

/// Standard Brownian bridge on [0, T] pinned at both ends, built as
/// B_t - (t/T) B_T from the path's Brownian stream.
Path sample_brownian_bridge(const TimeGrid& grid, const RngContract& rng, std::size_t path_index);
PathEnsemble simulate_brownian_bridge(const TimeGrid& grid, const RngContract& rng,
                                      std::size_t paths);

}  // namespace fexp
