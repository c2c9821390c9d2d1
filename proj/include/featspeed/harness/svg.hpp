#pragma once
// Deterministic SVG scatter/line plots from CSV columns.

#include "featspeed/harness/csv.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace featspeed::harness {

struct PlotSpec {
  std::string x, y;
  std::string series;  // optional grouping column
  bool log_x = false, log_y = false;
  std::string title;
};

namespace detail {

inline std::string fixed(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << v;
  return os.str();
}

inline std::string tick_label(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace detail

/// Points whose coordinates are non-finite (or non-positive on a log axis)
/// are skipped. Throws when no plottable points remain.
inline std::string render_svg(const ParsedCsv& csv, const PlotSpec& spec) {
  const std::size_t xi = csv.column(spec.x), yi = csv.column(spec.y);
  const std::size_t si = spec.series.empty() ? 0 : csv.column(spec.series);
  std::map<std::string, std::vector<std::pair<double, double>>> groups;
  for (const auto& row : csv.rows) {
    double x, y;
    try {
      x = parse_number(row[xi]);
      y = parse_number(row[yi]);
    } catch (const std::invalid_argument&) {
      continue;
    }
    if (!std::isfinite(x) || !std::isfinite(y)) continue;
    if ((spec.log_x && x <= 0.0) || (spec.log_y && y <= 0.0)) continue;
    groups[spec.series.empty() ? std::string() : row[si]].emplace_back(spec.log_x ? std::log10(x) : x,
                                                                       spec.log_y ? std::log10(y) : y);
  }
  if (groups.empty()) throw std::invalid_argument("plot: no data rows");

  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& [_, pts] : groups)
    for (auto [x, y] : pts) {
      x0 = std::min(x0, x), x1 = std::max(x1, x);
      y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;

  const double W = 640, H = 420, ml = 70, mr = 150, mt = 40, mb = 55;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
     << detail::escape(spec.title.empty() ? spec.y + " vs " + spec.x : spec.title) << "</text>\n";
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\"" << H - mt - mb
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double tx = x0 + (x1 - x0) * i / 4.0, ty = y0 + (y1 - y0) * i / 4.0;
    os << "<text x=\"" << detail::fixed(px(tx)) << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
       << detail::tick_label(spec.log_x ? std::pow(10.0, tx) : tx) << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << detail::fixed(py(ty) + 3) << "\" text-anchor=\"end\" font-size=\"10\">"
       << detail::tick_label(spec.log_y ? std::pow(10.0, ty) : ty) << "</text>\n";
  }
  os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
     << detail::escape(spec.x) << (spec.log_x ? " (log)" : "") << "</text>\n";
  os << "<text x=\"16\" y=\"" << (mt + H - mb) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
     << (mt + H - mb) / 2 << ")\">" << detail::escape(spec.y) << (spec.log_y ? " (log)" : "") << "</text>\n";

  std::size_t gi = 0;
  for (const auto& [name, pts] : groups) {
    const char* color = palette[gi % 8];
    // Line through per-x medians, points for every row.
    std::map<double, std::vector<double>> by_x;
    for (auto [x, y] : pts) by_x[x].push_back(y);
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (auto& [x, ys] : by_x) {
      std::sort(ys.begin(), ys.end());
      const std::size_t n = ys.size();
      const double med = n % 2 ? ys[n / 2] : 0.5 * (ys[n / 2 - 1] + ys[n / 2]);
      os << (first ? "" : " ") << detail::fixed(px(x)) << "," << detail::fixed(py(med));
      first = false;
    }
    os << "\"/>\n";
    for (auto [x, y] : pts)
      os << "<circle cx=\"" << detail::fixed(px(x)) << "\" cy=\"" << detail::fixed(py(y)) << "\" r=\"2\" fill=\"" << color
         << "\" fill-opacity=\"0.5\"/>\n";
    const double ly = mt + 14 + 16.0 * static_cast<double>(gi);
    os << "<rect x=\"" << W - mr + 10 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
    os << "<text x=\"" << W - mr + 26 << "\" y=\"" << ly + 1 << "\" font-size=\"11\">"
       << detail::escape(name.empty() ? spec.y : name) << "</text>\n";
    ++gi;
  }
  os << "</svg>\n";
  return os.str();
}

inline void emit_plot(const std::filesystem::path& csv_path, const PlotSpec& spec, const std::filesystem::path& svg_path) {
  const std::string svg = render_svg(read_csv(csv_path), spec);
  std::ofstream out(svg_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + svg_path.string());
  out << svg;
}

}  // namespace featspeed::harness
