#include "output.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace fexp::cli {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_compensator_csv(const std::string& path, const std::vector<CompensatorRow>& rows) {
  auto out = open_out(path);
  out << "level,t,A_value,tv_running\n";
  for (const auto& r : rows) {
    out << format_number(r.level) << ',' << format_number(r.t) << ',' << format_number(r.value) << ','
        << format_number(r.tv_running) << '\n';
  }
}

void write_mgtest_csv(const std::string& path, const std::vector<MgtestRow>& rows) {
  auto out = open_out(path);
  out << "test,subject,t,statistic,p_value,p_adjusted,verdict\n";
  for (const auto& r : rows) {
    out << csv_field(r.test) << ',' << csv_field(r.subject) << ',' << format_number(r.t) << ','
        << format_number(r.statistic) << ',' << format_number(r.p_value) << ','
        << format_number(r.p_adjusted) << ',' << (r.pass ? "pass" : "fail") << '\n';
  }
}

void write_convergence_csv(const std::string& path, const std::vector<ConvergenceTableRow>& rows) {
  auto out = open_out(path);
  out << "table,level,value,stderr\n";
  for (const auto& r : rows) {
    out << csv_field(r.table) << ',' << format_number(r.level) << ',' << format_number(r.value) << ','
        << format_number(r.std_error) << '\n';
  }
}

void write_svg(const std::string& path, const Figure& fig) {
  const double W = 640, H = 400, left = 70, right = 160, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  auto ty = [&](double y) { return fig.log_y ? std::log10(std::max(y, 1e-300)) : y; };

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : fig.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (fig.log_y && !(s.y[i] > 0.0)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (fig.has_reference && (!fig.log_y || fig.reference > 0.0)) {
    y0 = std::min(y0, ty(fig.reference));
    y1 = std::max(y1, ty(fig.reference));
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph; };

  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << xml_escape(fig.title) << "</text>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0;
    const double yv = y0 + (y1 - y0) * i / 4.0;
    const double label_y = fig.log_y ? std::pow(10.0, yv) : yv;
    out << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
        << format_number(std::round(xv * 1e4) / 1e4) << "</text>\n";
    out << "<text x=\"" << left - 6 << "\" y=\"" << top + (1.0 - i / 4.0) * ph + 4
        << "\" text-anchor=\"end\">" << format_number(std::round(label_y * 1e4) / 1e4) << "</text>\n";
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">"
      << xml_escape(fig.x_label) << "</text>\n";
  out << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << xml_escape(fig.y_label) << (fig.log_y ? " (log scale)" : "") << "</text>\n";
  if (fig.has_reference && (!fig.log_y || fig.reference > 0.0)) {
    out << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << py(fig.reference) << "\" y2=\""
        << py(fig.reference) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (std::size_t s = 0; s < fig.series.size(); ++s) {
    const auto& ser = fig.series[s];
    const char* colour = kPalette[s % (sizeof kPalette / sizeof kPalette[0])];
    out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < ser.x.size(); ++i) {
      if (!std::isfinite(ser.y[i]) || (fig.log_y && !(ser.y[i] > 0.0))) continue;
      out << format_number(px(ser.x[i])) << ',' << format_number(py(ser.y[i])) << ' ';
    }
    out << "\"/>\n";
    for (std::size_t i = 0; i < ser.x.size() && ser.x.size() <= 40; ++i) {
      if (!std::isfinite(ser.y[i]) || (fig.log_y && !(ser.y[i] > 0.0))) continue;
      out << "<circle cx=\"" << format_number(px(ser.x[i])) << "\" cy=\"" << format_number(py(ser.y[i]))
          << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
    }
    const double ly = top + 14 + 18.0 * static_cast<double>(s);
    out << "<line x1=\"" << left + pw + 10 << "\" x2=\"" << left + pw + 30 << "\" y1=\"" << ly - 4
        << "\" y2=\"" << ly - 4 << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << left + pw + 34 << "\" y=\"" << ly << "\">" << xml_escape(ser.name) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace fexp::cli
