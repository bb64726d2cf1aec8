#include "fexp/simulate.hpp"

#include <cmath>
#include <string>

#include "fexp/errors.hpp"

namespace fexp {

double SdeCoefficients::sigma_prime(double x) const {
  if (diffusion_derivative) return diffusion_derivative(x);
  const double h = 1e-5 * (1.0 + std::abs(x));
  return (diffusion(x + h) - diffusion(x - h)) / (2.0 * h);
}

void SdeCoefficients::validate(std::size_t samples) const {
  if (!drift || !diffusion) throw InvalidArgument("SDE coefficients are missing b or sigma");
  if (!(sigma_floor > 0.0)) throw InvalidArgument("declared sigma floor must be positive");
  if (!(domain_hi > domain_lo)) throw InvalidArgument("empty state domain");
  if (samples < 2) samples = 2;
  for (std::size_t i = 0; i < samples; ++i) {
    const double x = domain_lo + (domain_hi - domain_lo) * static_cast<double>(i) /
                                     static_cast<double>(samples - 1);
    const double s = diffusion(x);
    const double bx = drift(x);
    if (!std::isfinite(s) || !std::isfinite(bx)) {
      throw DomainViolation("coefficient not finite at x = " + std::to_string(x));
    }
    if (s < sigma_floor) {
      throw DomainViolation("sigma below declared floor at x = " + std::to_string(x));
    }
  }
}

SdeCoefficients brownian_coefficients() {
  SdeCoefficients c;
  c.name = "brownian";
  c.drift = [](double) { return 0.0; };
  c.diffusion = [](double) { return 1.0; };
  c.diffusion_derivative = [](double) { return 0.0; };
  c.sigma_floor = 1.0;
  return c;
}

SdeCoefficients ou_coefficients() {
  SdeCoefficients c;
  c.name = "ou";
  c.drift = [](double x) { return -x; };
  c.diffusion = [](double) { return 1.0; };
  c.diffusion_derivative = [](double) { return 0.0; };
  c.sigma_floor = 1.0;
  return c;
}

SdeCoefficients sigmoid_drift_coefficients() {
  SdeCoefficients c;
  c.name = "bounded-sigmoid-drift";
  c.drift = [](double x) { return -std::tanh(x); };
  c.diffusion = [](double) { return 1.0; };
  c.diffusion_derivative = [](double) { return 0.0; };
  c.sigma_floor = 1.0;
  return c;
}

SdeCoefficients coefficients_preset(const std::string& name) {
  if (name == "brownian") return brownian_coefficients();
  if (name == "ou") return ou_coefficients();
  if (name == "bounded-sigmoid-drift") return sigmoid_drift_coefficients();
  throw InvalidArgument("unknown SDE preset '" + name + "'");
}

void fill_brownian(const TimeGrid& grid, RandomStream& stream, std::span<double> out) {
  out[0] = 0.0;
  for (std::size_t i = 0; i < grid.steps(); ++i) {
    out[i + 1] = out[i] + std::sqrt(grid.step(i)) * stream.normal();
  }
}

Path sample_brownian(const TimeGrid& grid, const RngContract& rng, std::size_t path_index) {
  std::vector<double> values(grid.size());
  auto stream = rng.stream(path_index, StreamPurpose::kBrownian);
  fill_brownian(grid, stream, values);
  return Path(grid, std::move(values));
}

PathEnsemble simulate_brownian(const TimeGrid& grid, const RngContract& rng, std::size_t paths) {
  return PathEnsemble::generate(grid, rng.master_seed, paths,
                                [&](std::size_t p, std::span<double> row) {
                                  auto stream = rng.stream(p, StreamPurpose::kBrownian);
                                  fill_brownian(grid, stream, row);
                                });
}

namespace {

void euler_maruyama_row(const SdeCoefficients& coeffs, double x0, const TimeGrid& grid,
                        std::span<const double> driving, std::span<double> out) {
  // Written as X_i = (x0 + B_i) + D_i where D collects b dt + (sigma - 1) dB.
  // Algebraically this is the plain Euler step; it makes b = 0, sigma = 1
  // reproduce x0 + B bit for bit.
  double deviation = 0.0;
  out[0] = x0 + driving[0];
  for (std::size_t i = 0; i < grid.steps(); ++i) {
    const double x = out[i];
    const double db = driving[i + 1] - driving[i];
    deviation += coeffs.b(x) * grid.step(i) + (coeffs.sigma(x) - 1.0) * db;
    const double next = (x0 + driving[i + 1]) + deviation;
    if (!std::isfinite(next)) {
      throw NumericalFailure("Euler-Maruyama produced a non-finite value at time index " +
                                 std::to_string(i + 1),
                             i + 1);
    }
    out[i + 1] = next;
  }
}

}  // namespace

Path euler_maruyama(const SdeCoefficients& coeffs, double x0, const Path& driving,
                    const TimeGrid& grid) {
  if (!(driving.grid() == grid)) throw InvalidArgument("driving path lives on a different grid");
  std::vector<double> out(grid.size());
  euler_maruyama_row(coeffs, x0, grid, driving.values(), out);
  return Path(grid, std::move(out));
}

PathEnsemble euler_maruyama(const SdeCoefficients& coeffs, double x0,
                            const PathEnsemble& driving) {
  return PathEnsemble::generate(driving.grid(), driving.seed(), driving.path_count(),
                                [&](std::size_t p, std::span<double> row) {
                                  euler_maruyama_row(coeffs, x0, driving.grid(), driving.row(p), row);
                                });
}

Path reverse_path(const Path& x, double horizon) {
  const TimeGrid& grid = x.grid();
  if (std::abs(grid.horizon() - horizon) > 1e-12 * std::max(1.0, horizon)) {
    throw InvalidArgument("path horizon differs from the reversal horizon");
  }
  if (!grid.is_symmetric()) throw InvalidArgument("grid is not symmetric under t -> T - t");
  std::vector<double> out(x.values().rbegin(), x.values().rend());
  return Path(grid, std::move(out));
}

PathEnsemble reverse_ensemble(const PathEnsemble& x) {
  if (!x.grid().is_symmetric()) throw InvalidArgument("grid is not symmetric under t -> T - t");
  return PathEnsemble::generate(x.grid(), x.seed(), x.path_count(),
                                [&](std::size_t p, std::span<double> row) {
                                  auto src = x.row(p);
                                  std::copy(src.rbegin(), src.rend(), row.begin());
                                });
}

namespace {

void pin_to_bridge(const TimeGrid& grid, std::span<double> row) {
  const double end = row.back();
  const double T = grid.horizon();
  for (std::size_t i = 0; i < row.size(); ++i) row[i] -= grid[i] / T * end;
  row.back() = 0.0;
}

}  // namespace

Path sample_brownian_bridge(const TimeGrid& grid, const RngContract& rng, std::size_t path_index) {
  std::vector<double> values(grid.size());
  auto stream = rng.stream(path_index, StreamPurpose::kBrownian);
  fill_brownian(grid, stream, values);
  pin_to_bridge(grid, values);
  return Path(grid, std::move(values));
}

PathEnsemble simulate_brownian_bridge(const TimeGrid& grid, const RngContract& rng,
                                      std::size_t paths) {
  return PathEnsemble::generate(grid, rng.master_seed, paths,
                                [&](std::size_t p, std::span<double> row) {
                                  auto stream = rng.stream(p, StreamPurpose::kBrownian);
                                  fill_brownian(grid, stream, row);
                                  pin_to_bridge(grid, row);
                                });
}

}  // namespace fexp
