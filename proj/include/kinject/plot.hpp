#pragma once

// ALE curve emission: a CSV table and an SVG figure with one panel per
// feature, three panels per 960x540 row.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "kinject/error.hpp"
#include "kinject/interpret.hpp"

namespace kinject {

struct NamedCurve {
  std::string name;
  ALECurve curve;
};

namespace detail {

inline std::string full_precision(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << content;
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace detail

inline constexpr double kPanelRowWidth = 960.0;
inline constexpr double kPanelRowHeight = 540.0;
inline constexpr std::size_t kPanelsPerRow = 3;

/// `feature,z,effect,bin_count`; bin_count on the row of z_k is the size of
/// the bin ending at z_k (0 for z_0).
inline std::string ale_csv(const std::vector<NamedCurve>& curves) {
  std::string out = "feature,z,effect,bin_count\n";
  for (const auto& [name, c] : curves) {
    for (std::size_t k = 0; k < c.boundaries.size(); ++k) {
      out += name + "," + detail::full_precision(c.boundaries[k]) + "," +
             detail::full_precision(c.effects[k]) + "," +
             std::to_string(k == 0 ? 0 : c.counts[k - 1]) + "\n";
    }
  }
  return out;
}

/// Reads back what ale_csv wrote (boundaries, effects and counts only).
inline std::vector<NamedCurve> parse_ale_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "feature,z,effect,bin_count")
    throw ParseError("unexpected ALE CSV header", 1);
  std::vector<NamedCurve> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 4) throw ParseError("expected 4 fields", line_no);
    if (out.empty() || out.back().name != f[0]) out.push_back({f[0], {}});
    ALECurve& c = out.back().curve;
    c.boundaries.push_back(std::stod(f[1]));
    c.effects.push_back(std::stod(f[2]));
    if (c.boundaries.size() > 1) c.counts.push_back(std::stoul(f[3]));
  }
  return out;
}

inline std::string ale_svg(const std::vector<NamedCurve>& curves, const std::string& title = {}) {
  const std::size_t n = curves.size();
  const std::size_t cols = std::min(n, kPanelsPerRow);
  const std::size_t rows = (n + cols - 1) / cols;
  const double pw = kPanelRowWidth / static_cast<double>(cols);
  const double ph = kPanelRowHeight;
  const double total_h = ph * static_cast<double>(rows);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 "
      << kPanelRowWidth << " " << total_h << "\" width=\"" << kPanelRowWidth << "\" height=\""
      << total_h << "\" font-family=\"sans-serif\">\n";
  if (!title.empty()) svg << "<title>" << detail::xml_escape(title) << "</title>\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  const double left = 60, right = 16, top = 36, bottom = 44;
  for (std::size_t p = 0; p < n; ++p) {
    const auto& [name, c] = curves[p];
    const double ox = pw * static_cast<double>(p % cols);
    const double oy = ph * static_cast<double>(p / cols);
    const double w = pw - left - right;
    const double h = ph - top - bottom;
    const double xmin = c.boundaries.front(), xmax = c.boundaries.back();
    double ymin = *std::min_element(c.effects.begin(), c.effects.end());
    double ymax = *std::max_element(c.effects.begin(), c.effects.end());
    if (ymax - ymin < 1e-12) {
      ymin -= 0.5;
      ymax += 0.5;
    }
    const double xspan = xmax > xmin ? xmax - xmin : 1.0;
    auto px = [&](double v) { return left + (v - xmin) / xspan * w; };
    auto py = [&](double v) { return top + (ymax - v) / (ymax - ymin) * h; };

    svg << "<g class=\"panel\" id=\"panel-" << p << "\" transform=\"translate(" << ox << ","
        << oy << ")\">\n";
    svg << "  <text x=\"" << left + w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
        << detail::xml_escape(name) << "</text>\n";
    svg << "  <rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << w << "\" height=\"" << h
        << "\" fill=\"none\" stroke=\"#888\"/>\n";
    if (ymin < 0.0 && ymax > 0.0)
      svg << "  <line x1=\"" << left << "\" y1=\"" << py(0.0) << "\" x2=\"" << left + w
          << "\" y2=\"" << py(0.0) << "\" stroke=\"#ccc\" stroke-dasharray=\"4 3\"/>\n";
    svg << "  <text x=\"" << left << "\" y=\"" << top + h + 18 << "\" font-size=\"11\">"
        << detail::short_number(xmin) << "</text>\n";
    svg << "  <text x=\"" << left + w << "\" y=\"" << top + h + 18
        << "\" font-size=\"11\" text-anchor=\"end\">" << detail::short_number(xmax) << "</text>\n";
    svg << "  <text x=\"" << left - 6 << "\" y=\"" << top + 10
        << "\" font-size=\"11\" text-anchor=\"end\">" << detail::short_number(ymax) << "</text>\n";
    svg << "  <text x=\"" << left - 6 << "\" y=\"" << top + h
        << "\" font-size=\"11\" text-anchor=\"end\">" << detail::short_number(ymin) << "</text>\n";
    svg << "  <text x=\"" << left + w / 2 << "\" y=\"" << top + h + 34
        << "\" font-size=\"12\" text-anchor=\"middle\">feature value</text>\n";
    svg << "  <polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < c.boundaries.size(); ++k) {
      if (k) svg << ' ';
      svg << detail::short_number(px(c.boundaries[k])) << ','
          << detail::short_number(py(c.effects[k]));
    }
    svg << "\"/>\n</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

/// Writes the CSV and SVG. Nothing is written for an empty curve list.
inline void emit_ale_plot(const std::vector<NamedCurve>& curves, const std::string& svg_path,
                          const std::string& csv_path, const std::string& title = {}) {
  if (curves.empty()) throw UsageError("no ALE curves to plot");
  const std::string csv = ale_csv(curves);
  const std::string svg = ale_svg(curves, title);
  detail::write_file(csv_path, csv);
  detail::write_file(svg_path, svg);
}

}  // namespace kinject
