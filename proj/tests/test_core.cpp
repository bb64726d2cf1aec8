#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fexp/core.hpp"
#include "fexp/errors.hpp"
#include "fexp/rng.hpp"
#include "fexp/simulate.hpp"

using namespace fexp;

TEST_CASE("uniform grids") {
  auto g = make_uniform_grid(1.0, 2);
  REQUIRE(g.size() == 3);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.5);
  CHECK(g[2] == 1.0);

  auto minimal = make_uniform_grid(1.0, 1);
  CHECK(minimal.size() == 2);
  CHECK(minimal.horizon() == 1.0);

  auto half = make_uniform_grid(0.5, 4);
  const std::vector<double> expected{0.0, 0.125, 0.25, 0.375, 0.5};
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(half[i] == expected[i]);

  CHECK_THROWS_AS(make_uniform_grid(0.0, 4), InvalidArgument);
  CHECK_THROWS_AS(make_uniform_grid(-1.0, 4), InvalidArgument);
  CHECK_THROWS_AS(make_uniform_grid(1.0, 0), InvalidArgument);
}

TEST_CASE("time grid rejects malformed inputs") {
  CHECK_THROWS_AS(TimeGrid({0.0}), InvalidArgument);
  CHECK_THROWS_AS(TimeGrid({0.1, 0.5}), InvalidArgument);
  CHECK_THROWS_AS(TimeGrid({0.0, 0.5, 0.5}), InvalidArgument);
  CHECK(TimeGrid({0.0, 0.1, 1.0}).horizon() == 1.0);
  CHECK_FALSE(TimeGrid({0.0, 0.1, 1.0}).is_symmetric());
  CHECK(make_uniform_grid(1.0, 1024).is_symmetric());
}

TEST_CASE("dyadic subdivisions") {
  auto s1 = make_dyadic_subdivision(1, 1.0);
  REQUIRE(s1.size() == 3);
  CHECK(s1[1] == 0.5);
  auto s2 = make_dyadic_subdivision(2, 1.0);
  const std::vector<double> expected{0.0, 0.25, 0.5, 0.75, 1.0};
  REQUIRE(s2.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(s2[i] == expected[i]);

  for (int level = 0; level < 8; ++level) {
    auto coarse = make_dyadic_subdivision(level, 0.4);
    auto fine = make_dyadic_subdivision(level + 1, 0.4);
    for (double p : coarse.points()) {
      CHECK(std::find(fine.points().begin(), fine.points().end(), p) != fine.points().end());
    }
    CHECK(coarse.mesh() > 0.0);
  }
  CHECK_THROWS_AS(make_dyadic_subdivision(-1, 1.0), InvalidArgument);
  CHECK_THROWS_AS(make_dyadic_subdivision(2, 0.0), InvalidArgument);
}

TEST_CASE("subdivision snapping") {
  auto grid = make_uniform_grid(1.0, 10);
  Subdivision pi({0.0, 0.33, 0.35, 0.71, 1.0}, 0);
  auto snapped = pi.snapped_to(grid);
  const std::vector<double> expected{0.0, 0.3, 0.7, 1.0};
  REQUIRE(snapped.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(snapped[i] == doctest::Approx(expected[i]));
  for (double p : snapped.points()) CHECK(grid.contains(p));
}

TEST_CASE("discretize_path examples") {
  auto grid = make_uniform_grid(1.0, 4);
  Path constant(grid, std::vector<double>(5, 2.5));
  auto pi = make_dyadic_subdivision(1, 1.0);
  auto dc = discretize_path(constant, pi);
  for (double v : dc.values()) CHECK(v == 2.5);

  // 0 -> 0, 0.5 -> 1, 1 -> 3 with linear fill in between.
  Path x(grid, {0.0, 0.5, 1.0, 2.0, 3.0});
  auto d = discretize_path(x, pi);
  CHECK(d.at(0.75) == 1.0);
  CHECK(d.at(0.25) == 0.0);
  CHECK(d.at(1.0) == 3.0);
  CHECK(d[grid.size() - 1] == x[grid.size() - 1]);
}

TEST_CASE("discretize_path properties") {
  auto grid = make_uniform_grid(1.0, 256);
  RngContract rng{7};
  for (std::size_t p = 0; p < 20; ++p) {
    auto b = sample_brownian(grid, rng, p);
    for (int level = 0; level <= 6; ++level) {
      auto pi = make_dyadic_subdivision(level, 1.0);
      auto d = discretize_path(b, pi);
      for (double t : pi.points()) CHECK(d.at(t) == b.at(t));
      auto dd = discretize_path(d, pi);
      for (std::size_t k = 0; k < grid.size(); ++k) CHECK(dd[k] == d[k]);
    }
  }

  // Lipschitz path: sup distance shrinks along refining subdivisions.
  std::vector<double> v(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) v[k] = std::sin(6.0 * grid[k]) + grid[k];
  Path lip(grid, v);
  double previous = INFINITY;
  for (int level = 0; level <= 8; ++level) {
    auto d = discretize_path(lip, make_dyadic_subdivision(level, 1.0));
    double sup = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) sup = std::max(sup, std::abs(d[k] - lip[k]));
    CHECK(sup <= previous);
    previous = sup;
  }
  CHECK(previous == 0.0);
}

TEST_CASE("path validation") {
  auto grid = make_uniform_grid(1.0, 2);
  CHECK_THROWS_AS(Path(grid, {0.0, 1.0}), InvalidArgument);
  CHECK_THROWS_AS(Path(grid, {0.0, NAN, 1.0}), InvalidArgument);
  CHECK_THROWS_AS(Path(grid, {0.0, INFINITY, 1.0}), InvalidArgument);
}

TEST_CASE("ensemble regeneration ignores worker count") {
  auto grid = make_uniform_grid(1.0, 128);
  RngContract rng{2024};
  set_worker_count(1);
  auto a = simulate_brownian(grid, rng, 300);
  set_worker_count(4);
  auto b = simulate_brownian(grid, rng, 300);
  set_worker_count(7);
  auto c = simulate_brownian(grid, rng, 300);
  set_worker_count(0);
  REQUIRE(a.data().size() == b.data().size());
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  CHECK(std::equal(a.data().begin(), a.data().end(), c.data().begin()));

  // A single path drawn on its own matches its ensemble row.
  auto p17 = sample_brownian(grid, rng, 17);
  CHECK(std::equal(p17.values().begin(), p17.values().end(), a.row(17).begin()));
}

TEST_CASE("streams for distinct paths are uncorrelated") {
  RngContract rng{99};
  const std::size_t n = 20000;
  for (std::uint64_t pair = 0; pair < 5; ++pair) {
    auto s1 = rng.stream(2 * pair);
    auto s2 = rng.stream(2 * pair + 1);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = s1.normal();
      const double y = s2.normal();
      sxy += x * y;
      sxx += x * x;
      syy += y * y;
    }
    const double corr = sxy / std::sqrt(sxx * syy);
    // Under independence corr ~ N(0, 1/n); 4 sigma.
    CHECK(std::abs(corr) < 4.0 / std::sqrt(static_cast<double>(n)));
  }
  // Purposes on the same path are distinct streams too.
  auto a = rng.stream(3, StreamPurpose::kBrownian);
  auto b = rng.stream(3, StreamPurpose::kNoise);
  CHECK(a.normal() != b.normal());
}

TEST_CASE("parallel_for rethrows the smallest failing index") {
  set_worker_count(4);
  try {
    parallel_for(100, [](std::size_t i) {
      if (i == 37 || i == 81) throw NumericalFailure("boom", i);
    });
    FAIL("expected exception");
  } catch (const NumericalFailure& e) {
    CHECK(e.index() == 37);
  }
  set_worker_count(0);
}
