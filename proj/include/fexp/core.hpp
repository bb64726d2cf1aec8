#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "fexp/rng.hpp"

namespace fexp {

/// Strictly increasing times 0 = t_0 < ... < t_N = T with N >= 1.
/// Copies share the underlying storage.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> times);

  std::span<const double> times() const { return *times_; }
  double operator[](std::size_t i) const { return (*times_)[i]; }
  std::size_t size() const { return times_->size(); }
  std::size_t steps() const { return times_->size() - 1; }
  double horizon() const { return times_->back(); }
  double step(std::size_t i) const { return (*times_)[i + 1] - (*times_)[i]; }
  double max_step() const;

  /// Largest index i with times[i] <= t. Times within a relative 1e-9 of a
  /// grid point count as that point. Throws InvalidArgument for t < 0.
  std::size_t index_at_or_below(double t) const;
  /// True when t is (up to the same tolerance) a grid time.
  bool contains(double t) const;
  /// Symmetric under t -> T - t.
  bool is_symmetric() const;

  bool operator==(const TimeGrid& other) const;

 private:
  std::shared_ptr<const std::vector<double>> times_;
};

/// Grid of `steps + 1` equally spaced points on [0, horizon].
TimeGrid make_uniform_grid(double horizon, std::size_t steps);

/// Partition 0 = t_0 < t_1 < ... < t_{n+1} = T of [0, T].
class Subdivision {
 public:
  Subdivision(std::vector<double> points, int level);

  std::span<const double> points() const { return points_; }
  double operator[](std::size_t i) const { return points_[i]; }
  std::size_t size() const { return points_.size(); }
  std::size_t intervals() const { return points_.size() - 1; }
  double horizon() const { return points_.back(); }
  int level() const { return level_; }
  double mesh() const;

  /// Moves every point to the nearest grid time at or below it and drops
  /// duplicates. The result lives exactly on grid times.
  Subdivision snapped_to(const TimeGrid& grid) const;

 private:
  std::vector<double> points_;
  int level_;
};

/// Points k * T / 2^level, k = 0..2^level.
Subdivision make_dyadic_subdivision(int level, double horizon);

/// One sampled trajectory.
class Path {
 public:
  Path(TimeGrid grid, std::vector<double> values);

  const TimeGrid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return values_.size(); }
  /// Piecewise-constant (cadlag) evaluation: value at the largest grid time <= t.
  double at(double t) const;

 private:
  TimeGrid grid_;
  std::vector<double> values_;
};

/// Discretization of x along pi: the value at t is x at the largest
/// subdivision point <= t, and at the horizon it is x_T. Subdivision points
/// off the grid are snapped down to grid times first.
Path discretize_path(const Path& x, const Subdivision& pi);

/// Paths sharing one grid, stored row-major (one row per path).
class PathEnsemble {
 public:
  PathEnsemble(TimeGrid grid, std::uint64_t seed, std::size_t path_count);

  const TimeGrid& grid() const { return grid_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t path_count() const { return path_count_; }
  std::size_t points() const { return grid_.size(); }

  std::span<const double> row(std::size_t path) const;
  std::span<double> row(std::size_t path);
  double value(std::size_t path, std::size_t k) const { return data_[path * points() + k]; }
  /// Piecewise-constant lookup, as Path::at.
  double value_at(std::size_t path, double t) const;
  Path path(std::size_t i) const;
  std::span<const double> data() const { return data_; }

  /// Column of values at grid index k across all paths.
  std::vector<double> column(std::size_t k) const;

  using RowGenerator = std::function<void(std::size_t path, std::span<double> row)>;
  /// Fills every row with `fill`, possibly in parallel; `fill` must depend only
  /// on its arguments for the result to be reproducible.
  static PathEnsemble generate(TimeGrid grid, std::uint64_t seed, std::size_t path_count,
                               const RowGenerator& fill);

 private:
  TimeGrid grid_;
  std::uint64_t seed_;
  std::size_t path_count_;
  std::vector<double> data_;
};

/// Worker count used by ensemble-level loops. 0 means hardware concurrency.
void set_worker_count(std::size_t workers);
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Each index is handled by exactly one worker
/// and results must be written to index-addressed storage.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace fexp
