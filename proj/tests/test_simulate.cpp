#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fexp/core.hpp"
#include "fexp/errors.hpp"
#include "fexp/simulate.hpp"
#include "fexp/stats.hpp"

using namespace fexp;

TEST_CASE("brownian paths start at zero and are deterministic") {
  auto grid = make_uniform_grid(1.0, 64);
  RngContract rng{11};
  auto a = sample_brownian(grid, rng, 5);
  auto b = sample_brownian(grid, rng, 5);
  CHECK(a[0] == 0.0);
  CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

TEST_CASE("brownian increment variance") {
  auto grid = make_uniform_grid(1.0, 8);
  auto ens = simulate_brownian(grid, RngContract{3}, 100000);
  const double dt = 1.0 / 8.0;
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    std::vector<double> sq(ens.path_count());
    for (std::size_t p = 0; p < ens.path_count(); ++p) {
      const double d = ens.value(p, k + 1) - ens.value(p, k);
      sq[p] = d * d;
    }
    // Mean of squared increments estimates the variance; its standard error
    // under a N(0, dt) law is dt * sqrt(2 / n).
    const auto m = summarize(sq);
    const double se = dt * std::sqrt(2.0 / static_cast<double>(ens.path_count()));
    CHECK(std::abs(m.mean - dt) < 3.0 * se);
  }
}

TEST_CASE("brownian quadratic variation") {
  auto grid = make_uniform_grid(1.0, 4096);
  auto ens = simulate_brownian(grid, RngContract{5}, 1000);
  std::vector<double> qv(ens.path_count());
  for (std::size_t p = 0; p < ens.path_count(); ++p) {
    double s = 0.0;
    for (std::size_t k = 0; k < grid.steps(); ++k) {
      const double d = ens.value(p, k + 1) - ens.value(p, k);
      s += d * d;
    }
    qv[p] = s;
  }
  CHECK(std::abs(summarize(qv).mean - 1.0) < 0.02);
}

TEST_CASE("euler maruyama degenerate cases") {
  auto grid = make_uniform_grid(1.0, 256);
  RngContract rng{8};
  auto b = sample_brownian(grid, rng, 0);

  SdeCoefficients frozen;
  frozen.drift = [](double) { return 0.0; };
  frozen.diffusion = [](double) { return 0.0; };
  auto x = euler_maruyama(frozen, 1.5, b, grid);
  for (double v : x.values()) CHECK(v == doctest::Approx(1.5).epsilon(1e-14));

  auto y = euler_maruyama(brownian_coefficients(), 0.7, b, grid);
  for (std::size_t k = 0; k < grid.size(); ++k) CHECK(y[k] == 0.7 + b[k]);

  auto ens = simulate_brownian(grid, rng, 50);
  auto yens = euler_maruyama(brownian_coefficients(), -0.25, ens);
  for (std::size_t p = 0; p < 50; ++p) {
    for (std::size_t k = 0; k < grid.size(); ++k) CHECK(yens.value(p, k) == -0.25 + ens.value(p, k));
  }
}

TEST_CASE("euler maruyama reports the failing index") {
  auto grid = make_uniform_grid(1.0, 64);
  auto b = sample_brownian(grid, RngContract{1}, 0);
  SdeCoefficients explode;
  explode.drift = [](double x) { return 1e200 * (1.0 + x * x); };
  explode.diffusion = [](double) { return 1.0; };
  try {
    euler_maruyama(explode, 1.0, b, grid);
    FAIL("expected numerical failure");
  } catch (const NumericalFailure& e) {
    CHECK(e.index() != NumericalFailure::kNoIndex);
    CHECK(e.index() <= grid.steps());
  }
}

TEST_CASE("ornstein-uhlenbeck mean") {
  auto grid = make_uniform_grid(1.0, 512);
  auto b = simulate_brownian(grid, RngContract{21}, 20000);
  auto x = euler_maruyama(ou_coefficients(), 1.0, b);
  const auto m = summarize(x.column(grid.steps()));
  // Euler bias at dt = 1/512 is about 1e-3 * e^{-1}, well below the MC error.
  CHECK(std::abs(m.mean - std::exp(-1.0)) < 3.0 * m.std_error);
}

TEST_CASE("coefficient validation") {
  auto c = brownian_coefficients();
  CHECK_NOTHROW(c.validate());
  SdeCoefficients bad;
  bad.drift = [](double) { return 0.0; };
  bad.diffusion = [](double x) { return x; };
  bad.sigma_floor = 0.1;
  CHECK_THROWS_AS(bad.validate(), DomainViolation);
  CHECK_THROWS_AS(coefficients_preset("nope"), InvalidArgument);
  CHECK(coefficients_preset("ou").b(2.0) == -2.0);
  // Finite-difference fallback for sigma'.
  SdeCoefficients expo;
  expo.drift = [](double) { return 0.0; };
  expo.diffusion = [](double x) { return std::exp(x); };
  CHECK(expo.sigma_prime(0.3) == doctest::Approx(std::exp(0.3)).epsilon(1e-8));
}

TEST_CASE("time reversal") {
  auto grid = make_uniform_grid(1.0, 128);
  auto x = sample_brownian(grid, RngContract{4}, 2);
  auto z = reverse_path(x, 1.0);
  CHECK(z[0] == x[grid.steps()]);
  auto back = reverse_path(z, 1.0);
  CHECK(std::equal(back.values().begin(), back.values().end(), x.values().begin()));

  std::vector<double> a(x.values().begin(), x.values().end());
  std::vector<double> bz(z.values().begin(), z.values().end());
  std::sort(a.begin(), a.end());
  std::sort(bz.begin(), bz.end());
  CHECK(a == bz);

  // B~_t = B_{1-t} - B_1 starts at 0.
  const double recentered0 = z[0] - x[grid.steps()];
  CHECK(recentered0 == 0.0);

  CHECK_THROWS_AS(reverse_path(x, 2.0), InvalidArgument);
  TimeGrid skew({0.0, 0.1, 1.0});
  Path s(skew, {0.0, 1.0, 2.0});
  CHECK_THROWS_AS(reverse_path(s, 1.0), InvalidArgument);
}

TEST_CASE("brownian bridge moments") {
  auto grid = make_uniform_grid(1.0, 8);
  const std::size_t n = 100000;
  auto w = simulate_brownian_bridge(grid, RngContract{13}, n);
  for (std::size_t p = 0; p < 10; ++p) {
    CHECK(w.value(p, 0) == 0.0);
    CHECK(w.value(p, 8) == 0.0);
  }
  auto mid = w.column(4);
  auto quarter = w.column(2);
  std::vector<double> sq(n), cross(n);
  for (std::size_t p = 0; p < n; ++p) {
    sq[p] = mid[p] * mid[p];
    cross[p] = mid[p] * quarter[p];
  }
  const auto v = summarize(sq);
  const auto c = summarize(cross);
  CHECK(std::abs(v.mean - 0.25) < 3.0 * v.std_error);
  CHECK(std::abs(c.mean - 0.125) < 3.0 * c.std_error);

  // Adding t B_1 back gives Brownian increments again.
  auto b = simulate_brownian(grid, RngContract{13}, n);
  std::vector<double> inc(n);
  for (std::size_t p = 0; p < n; ++p) {
    const double b1 = b.value(p, 8);
    const double x3 = w.value(p, 3) + grid[3] * b1;
    const double x2 = w.value(p, 2) + grid[2] * b1;
    inc[p] = (x3 - x2) * (x3 - x2);
  }
  const auto iv = summarize(inc);
  CHECK(std::abs(iv.mean - 0.125) < 3.0 * iv.std_error);
}
