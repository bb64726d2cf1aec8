#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "fexp/density.hpp"
#include "fexp/errors.hpp"
#include "fexp/expand.hpp"
#include "fexp/mgtest.hpp"
#include "fexp/simulate.hpp"

using namespace fexp;

namespace {

const std::vector<double> kTimes{0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35};

struct Fixture {
  TimeGrid grid = make_uniform_grid(1.0, 1024);
  PathEnsemble b = simulate_brownian(grid, RngContract{42}, 4000);
  PathEnsemble z = reverse_ensemble(b);
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

PathEnsemble scaled(const PathEnsemble& m, double c, double drift) {
  const auto& g = m.grid();
  return PathEnsemble::generate(g, m.seed(), m.path_count(), [&](std::size_t p, std::span<double> row) {
    for (std::size_t k = 0; k < g.size(); ++k) row[k] = c * m.value(p, k) + drift * g[k];
  });
}

std::vector<SigmaFieldSpec> interval_specs(const Subdivision& pi, const std::vector<const PathEnsemble*>& src,
                                           const std::vector<std::string>& names) {
  std::vector<SigmaFieldSpec> out;
  for (std::size_t i = 0; i < pi.intervals(); ++i) {
    std::vector<Tap> taps;
    for (std::size_t j = 0; j < src.size(); ++j) taps.push_back({names[j], src[j], pi[i], nullptr});
    out.push_back(make_tap_spec("interval", pi[i], taps));
  }
  return out;
}

}  // namespace

TEST_CASE("polynomial basis layout") {
  Eigen::MatrixXd x(2, 5);
  x << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10;
  std::vector<std::string> names;
  const auto b = polynomial_basis(x, {"a", "b", "c", "d", "e"}, &names);
  CHECK(b.cols() == 1 + 5 + 10);
  CHECK(names[0] == "1");
  CHECK(names[6] == "b*b");
  CHECK(b(1, 6) == 49.0);
  CHECK(names.back() == "e*e");
}

TEST_CASE("Brownian motion is a martingale in its own filtration") {
  auto& f = fixture();
  const auto specs = make_lagged_specs("own past", {&f.b}, {"B"}, kTimes);
  const auto rep = increment_orthogonality_test(f.b, specs, kTimes, 0.01, 0.4);
  CHECK(rep.pass);
  CHECK(rep.rows.size() == kTimes.size());
  for (const auto& r : rep.rows) {
    CHECK(r.p_value >= 0.0);
    CHECK(r.p_value <= 1.0);
    CHECK(r.p_adjusted >= r.p_value);
    CHECK(r.p_adjusted <= 1.0);
  }
}

TEST_CASE("raw Brownian motion is not a martingale once the reversal is known") {
  auto& f = fixture();
  const auto specs = make_lagged_specs("reversal", {&f.b, &f.z}, {"B", "Z"}, kTimes);
  const auto rep = increment_orthogonality_test(f.b, specs, kTimes, 0.01, 0.4);
  CHECK_FALSE(rep.pass);
  // The drift (Z_t - B_t) / (1 - 2t) loads positively on Z_t.
  for (const auto& r : rep.rows) {
    REQUIRE(r.basis[2] == "Z(t)");
    CHECK(r.coefficients[2] > 0.0);
  }
  bool any = false;
  for (const auto& r : rep.rows) any = any || r.p_adjusted < 0.01;
  CHECK(any);
}

TEST_CASE("removing the limit compensator restores the martingale property") {
  auto& f = fixture();
  const auto score = gaussian_score_function();
  const auto comp = subtract_compensator(
      f.b, [&](std::size_t, const Path& x) { return compensator_limit(x, score, 0.4); });
  const auto specs = make_lagged_specs("reversal", {&comp.martingale, &f.z}, {"M", "Z"}, kTimes);
  const auto rep = increment_orthogonality_test(comp.martingale, specs, kTimes, 0.01, 0.4);
  CHECK(rep.pass);

  const auto qv = qv_test(comp.martingale, 0.4, 0.02);
  CHECK(qv.pass);
  CHECK(qv.rows[0].statistic == doctest::Approx(0.4).epsilon(0.02));
  CHECK(realized_quadratic_variation(comp.compensator, 0.4).mean <= 0.02 * 0.4);
}

TEST_CASE("quadratic variation checks") {
  auto& f = fixture();
  const auto rep = qv_test(f.b, 0.4, 0.02);
  CHECK(rep.pass);
  const auto flipped = qv_test(scaled(f.b, -1.0, 0.0), 0.4, 0.02);
  CHECK(flipped.rows[0].statistic == rep.rows[0].statistic);
  CHECK(flipped.rows[0].p_value == rep.rows[0].p_value);
  CHECK_FALSE(qv_test(scaled(f.b, 1.2, 0.0), 0.4, 0.02).pass);

  const auto coarse = simulate_brownian(make_uniform_grid(1.0, 512), RngContract{1}, 10);
  CHECK_THROWS_AS(qv_test(coarse, 0.4, 0.02), InvalidArgument);
}

TEST_CASE("orthogonality test preconditions") {
  auto& f = fixture();
  const auto specs = make_lagged_specs("own", {&f.b}, {"B"}, {0.39});
  CHECK_THROWS_AS(increment_orthogonality_test(f.b, specs, {0.39}, 0.01, 0.4), InvalidArgument);
  const auto small = simulate_brownian(f.grid, RngContract{3}, 1000);
  const auto s2 = make_lagged_specs("own", {&small}, {"B"}, {0.1});
  CHECK_THROWS_AS(increment_orthogonality_test(small, s2, {0.1}, 0.01, 0.4), InvalidArgument);
}

TEST_CASE("collinear features are dropped and flagged") {
  auto& f = fixture();
  const auto twin = scaled(f.b, 2.0, 0.0);
  const auto specs = make_lagged_specs("twin", {&f.b, &twin}, {"B", "2B"}, {0.2});
  const auto rep = increment_orthogonality_test(f.b, specs, {0.2}, 0.01, 0.4);
  CHECK(rep.dropped_columns);
  CHECK(rep.pass);
}

TEST_CASE("quasimartingale variation") {
  auto& f = fixture();
  const auto pi = make_dyadic_subdivision(4, 0.4);

  SUBCASE("martingale stays below its noise floor") {
    const auto q = quasimartingale_variation(f.b, pi, interval_specs(pi, {&f.b}, {"B"}));
    CHECK(q.estimate <= q.noise_floor);
  }

  SUBCASE("deterministic drift") {
    const auto t = scaled(f.b, 0.0, 1.0);
    const auto q = quasimartingale_variation(t, pi, interval_specs(pi, {&f.b}, {"B"}));
    // The subdivision end is snapped down to the grid.
    const double reached = f.grid[f.grid.index_at_or_below(0.4)];
    CHECK(q.estimate == doctest::Approx(reached).epsilon(1e-9));
    CHECK(q.noise_floor < 1e-9);
  }

  SUBCASE("reversal drift") {
    const auto q = quasimartingale_variation(f.b, pi, interval_specs(pi, {&f.b, &f.z}, {"B", "Z"}));
    const double oracle = std::sqrt(2.0 / std::numbers::pi) * (1.0 - std::sqrt(1.0 - 0.8));
    CHECK(std::abs(q.estimate - oracle) <= 0.15 * oracle);
    CHECK(q.estimate > q.noise_floor);
  }

  SUBCASE("adding a deterministic drift adds its length") {
    const double c = 0.5;
    const auto specs = interval_specs(pi, {&f.b}, {"B"});
    const auto base = quasimartingale_variation(f.b, pi, specs);
    const auto moved = quasimartingale_variation(scaled(f.b, 1.0, c), pi, specs);
    const double se = std::hypot(base.std_error, moved.std_error);
    const double reached = f.grid[f.grid.index_at_or_below(0.4)];
    CHECK(std::abs(moved.estimate - base.estimate - c * reached) <= 3.0 * se);
  }
}

TEST_CASE("reports are deterministic") {
  auto& f = fixture();
  const auto specs = make_lagged_specs("reversal", {&f.b, &f.z}, {"B", "Z"}, kTimes);
  const auto a = increment_orthogonality_test(f.b, specs, kTimes, 0.01, 0.4);
  set_worker_count(1);
  const auto b = increment_orthogonality_test(f.b, specs, kTimes, 0.01, 0.4);
  set_worker_count(0);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].coefficients == b.rows[i].coefficients);
    CHECK(a.rows[i].p_value == b.rows[i].p_value);
  }
}
