#include "fexp/core.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "fexp/errors.hpp"

namespace fexp {

namespace {

double grid_tolerance(double horizon) { return 1e-9 * std::max(1.0, horizon); }

std::atomic<std::size_t> g_workers{0};

}  // namespace

TimeGrid::TimeGrid(std::vector<double> times) {
  if (times.size() < 2) throw InvalidArgument("time grid needs at least 2 points");
  if (times.front() != 0.0) throw InvalidArgument("time grid must start at 0");
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    if (!(times[i + 1] > times[i]) || !std::isfinite(times[i + 1])) {
      throw InvalidArgument("time grid must be strictly increasing and finite");
    }
  }
  times_ = std::make_shared<const std::vector<double>>(std::move(times));
}

double TimeGrid::max_step() const {
  double m = 0.0;
  for (std::size_t i = 0; i < steps(); ++i) m = std::max(m, step(i));
  return m;
}

std::size_t TimeGrid::index_at_or_below(double t) const {
  if (t < -grid_tolerance(horizon())) throw InvalidArgument("negative time");
  const auto& ts = *times_;
  auto it = std::upper_bound(ts.begin(), ts.end(), t + grid_tolerance(horizon()));
  return static_cast<std::size_t>(std::distance(ts.begin(), it)) - 1;
}

bool TimeGrid::contains(double t) const {
  if (t < -grid_tolerance(horizon()) || t > horizon() + grid_tolerance(horizon())) return false;
  return std::abs((*times_)[index_at_or_below(t)] - t) <= grid_tolerance(horizon());
}

bool TimeGrid::is_symmetric() const {
  const auto& ts = *times_;
  const double T = horizon();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (std::abs(ts[i] + ts[ts.size() - 1 - i] - T) > grid_tolerance(T)) return false;
  }
  return true;
}

bool TimeGrid::operator==(const TimeGrid& other) const {
  return times_ == other.times_ || *times_ == *other.times_;
}

TimeGrid make_uniform_grid(double horizon, std::size_t steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("horizon must be positive");
  if (steps == 0) throw InvalidArgument("grid needs at least one step");
  std::vector<double> times(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) {
    times[i] = horizon * static_cast<double>(i) / static_cast<double>(steps);
  }
  times.back() = horizon;
  return TimeGrid(std::move(times));
}

Subdivision::Subdivision(std::vector<double> points, int level)
    : points_(std::move(points)), level_(level) {
  if (points_.size() < 2) throw InvalidArgument("subdivision needs at least 2 points");
  if (points_.front() != 0.0) throw InvalidArgument("subdivision must start at 0");
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
    if (!(points_[i + 1] > points_[i])) {
      throw InvalidArgument("subdivision must be strictly increasing");
    }
  }
}

double Subdivision::mesh() const {
  double m = 0.0;
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) m = std::max(m, points_[i + 1] - points_[i]);
  return m;
}

Subdivision Subdivision::snapped_to(const TimeGrid& grid) const {
  if (horizon() > grid.horizon() + grid_tolerance(grid.horizon())) {
    throw InvalidArgument("subdivision extends beyond the grid horizon");
  }
  std::vector<double> snapped;
  snapped.reserve(points_.size());
  for (double p : points_) {
    const double g = grid[grid.index_at_or_below(p)];
    if (snapped.empty() || g > snapped.back()) snapped.push_back(g);
  }
  if (snapped.size() < 2) {
    throw InvalidArgument("subdivision collapses to a single grid point");
  }
  return Subdivision(std::move(snapped), level_);
}

Subdivision make_dyadic_subdivision(int level, double horizon) {
  if (level < 0) throw InvalidArgument("dyadic level must be nonnegative");
  if (level > 30) throw InvalidArgument("dyadic level too large");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("horizon must be positive");
  const std::size_t n = std::size_t{1} << level;
  std::vector<double> pts(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    pts[k] = horizon * static_cast<double>(k) / static_cast<double>(n);
  }
  pts.back() = horizon;
  return Subdivision(std::move(pts), level);
}

Path::Path(TimeGrid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.size()) throw InvalidArgument("path length differs from grid length");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw InvalidArgument("path value at index " + std::to_string(i) + " is not finite");
    }
  }
}

double Path::at(double t) const { return values_[grid_.index_at_or_below(t)]; }

Path discretize_path(const Path& x, const Subdivision& pi) {
  const TimeGrid& grid = x.grid();
  const Subdivision snapped = pi.snapped_to(grid);
  std::vector<double> out(grid.size());
  std::size_t next = 1;  // next subdivision point not yet reached
  std::size_t held = 0;  // grid index whose value is currently held
  for (std::size_t k = 0; k < grid.size(); ++k) {
    while (next < snapped.size() && grid[k] >= snapped[next]) {
      held = grid.index_at_or_below(snapped[next]);
      ++next;
    }
    out[k] = x[held];
  }
  out.back() = x[grid.size() - 1];
  return Path(grid, std::move(out));
}

PathEnsemble::PathEnsemble(TimeGrid grid, std::uint64_t seed, std::size_t path_count)
    : grid_(std::move(grid)), seed_(seed), path_count_(path_count) {
  if (path_count_ == 0) throw InvalidArgument("ensemble needs at least one path");
  data_.assign(path_count_ * grid_.size(), 0.0);
}

std::span<const double> PathEnsemble::row(std::size_t path) const {
  return std::span<const double>(data_).subspan(path * points(), points());
}

std::span<double> PathEnsemble::row(std::size_t path) {
  return std::span<double>(data_).subspan(path * points(), points());
}

double PathEnsemble::value_at(std::size_t path, double t) const {
  return value(path, grid_.index_at_or_below(t));
}

Path PathEnsemble::path(std::size_t i) const {
  auto r = row(i);
  return Path(grid_, std::vector<double>(r.begin(), r.end()));
}

std::vector<double> PathEnsemble::column(std::size_t k) const {
  std::vector<double> out(path_count_);
  for (std::size_t p = 0; p < path_count_; ++p) out[p] = value(p, k);
  return out;
}

PathEnsemble PathEnsemble::generate(TimeGrid grid, std::uint64_t seed, std::size_t path_count,
                                    const RowGenerator& fill) {
  PathEnsemble ens(std::move(grid), seed, path_count);
  parallel_for(path_count, [&](std::size_t p) { fill(p, ens.row(p)); });
  return ens;
}

void set_worker_count(std::size_t workers) { g_workers.store(workers); }

std::size_t worker_count() {
  const std::size_t w = g_workers.load();
  if (w != 0) return w;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::size_t error_index = n;
  std::exception_ptr error;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        // Keep the failure with the smallest index so the reported error
        // does not depend on scheduling.
        std::lock_guard<std::mutex> lock(error_mutex);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 0; w + 1 < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace fexp
