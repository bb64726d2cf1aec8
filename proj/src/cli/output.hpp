#pragma once

// Table and figure writers for the scenario runner.

#include <string>
#include <vector>

namespace fexp::cli {

struct CompensatorRow {
  double level;
  double t;
  double value;
  double tv_running;
};

struct MgtestRow {
  std::string test;
  std::string subject;
  double t;
  double statistic;
  double p_value;
  double p_adjusted;
  bool pass;
};

struct ConvergenceTableRow {
  std::string table;
  double level;
  double value;
  double std_error;
};

/// Fixed-format number: shortest "%.10g" rendering, "nan"/"inf" spelled out.
std::string format_number(double v);

void write_compensator_csv(const std::string& path, const std::vector<CompensatorRow>& rows);
void write_mgtest_csv(const std::string& path, const std::vector<MgtestRow>& rows);
void write_convergence_csv(const std::string& path, const std::vector<ConvergenceTableRow>& rows);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Figure {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  bool log_y = false;
  /// Optional horizontal reference line.
  bool has_reference = false;
  double reference = 0.0;
};

void write_svg(const std::string& path, const Figure& fig);

}  // namespace fexp::cli
