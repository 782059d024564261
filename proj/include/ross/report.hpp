#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ross/metrics.hpp"

namespace ross {

struct RunMetrics {
  std::string name;
  MetricsTable table;
};

inline MetricsTable load_metrics(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw NotFound("missing metrics table " + file.string());
  return read_metrics_csv(is);
}

/// A directory with metrics.csv is one run; otherwise every descendant that
/// has one is collected, named by its relative path.
inline std::vector<RunMetrics> collect_runs(const std::vector<std::filesystem::path>& dirs) {
  namespace fs = std::filesystem;
  std::vector<RunMetrics> out;
  for (const auto& d : dirs) {
    if (!fs::is_directory(d)) throw NotFound("run directory not found: " + d.string());
    const auto base = fs::weakly_canonical(d).filename().string();
    if (fs::exists(d / "metrics.csv")) {
      out.push_back({base, load_metrics(d / "metrics.csv")});
      continue;
    }
    std::vector<fs::path> found;
    for (const auto& e : fs::recursive_directory_iterator(d))
      if (e.is_regular_file() && e.path().filename() == "metrics.csv") found.push_back(e.path().parent_path());
    if (found.empty()) throw NotFound("no metrics.csv under " + d.string());
    std::sort(found.begin(), found.end());
    for (const auto& f : found) out.push_back({base + "/" + fs::relative(f, d).generic_string(), load_metrics(f / "metrics.csv")});
  }
  return out;
}

/// Merged comparison: one row per task index, accuracy and forgetting columns per run.
inline std::string merged_table(const std::vector<RunMetrics>& runs) {
  std::ostringstream os;
  os << "after_task";
  std::size_t rows = 0;
  for (const auto& r : runs) {
    os << ',' << r.name << ":avg_accuracy," << r.name << ":avg_forgetting";
    rows = std::max(rows, r.table.avg_accuracy.size());
  }
  os << '\n';
  for (std::size_t t = 0; t < rows; ++t) {
    os << t;
    for (const auto& r : runs) {
      os << ',';
      if (t < r.table.avg_accuracy.size()) os << format_real(r.table.avg_accuracy[t]);
      os << ',';
      if (t >= 1 && t < r.table.avg_forgetting.size()) os << format_real(r.table.avg_forgetting[t]);
    }
    os << '\n';
  }
  return os.str();
}

namespace detail {

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[i % 10];
}

inline std::string svg_escape(const std::string& s) {
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

/// Average accuracy after each task, one polyline per run.
inline std::string accuracy_plot_svg(const std::vector<RunMetrics>& runs) {
  const int W = 640, H = 400, L = 60, R = 180, T = 30, B = 50;
  std::size_t points = 1;
  for (const auto& r : runs) points = std::max(points, r.table.avg_accuracy.size());
  auto x = [&](std::size_t t) { return L + (points > 1 ? static_cast<double>(t) * (W - L - R) / static_cast<double>(points - 1) : 0.0); };
  auto y = [&](double v) { return T + (1.0 - v) * (H - T - B); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = k / 5.0;
    os << "<line x1=\"" << L << "\" x2=\"" << W - R << "\" y1=\"" << y(v) << "\" y2=\"" << y(v) << "\" stroke=\"#ddd\"/>";
    os << "<text x=\"" << L - 8 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\">" << k * 20 << "</text>\n";
  }
  for (std::size_t t = 0; t < points; ++t)
    os << "<text x=\"" << x(t) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << t << "</text>\n";
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">task</text>\n";
  os << "<text x=\"15\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 15 " << (T + H - B) / 2
     << ")\" text-anchor=\"middle\">average accuracy (%)</text>\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& a = runs[i].table.avg_accuracy;
    os << "<polyline fill=\"none\" stroke=\"" << detail::palette(i) << "\" stroke-width=\"2\" points=\"";
    for (std::size_t t = 0; t < a.size(); ++t) os << (t ? " " : "") << x(t) << ',' << y(a[t]);
    os << "\"/>\n";
    for (std::size_t t = 0; t < a.size(); ++t)
      os << "<circle cx=\"" << x(t) << "\" cy=\"" << y(a[t]) << "\" r=\"3\" fill=\"" << detail::palette(i) << "\"/>";
    os << "\n<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (i + 1) << "\" fill=\"" << detail::palette(i) << "\">"
       << detail::svg_escape(runs[i].name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

/// Final average forgetting per run as bars.
inline std::string forgetting_plot_svg(const std::vector<RunMetrics>& runs) {
  const int W = 640, H = 400, L = 60, T = 30, B = 120;
  const double bw = runs.empty() ? 0 : static_cast<double>(W - L - 20) / static_cast<double>(runs.size());
  double top = 0.05;
  for (const auto& r : runs)
    if (!r.table.avg_forgetting.empty()) top = std::max(top, r.table.avg_forgetting.back());
  top = std::ceil(top * 10.0) / 10.0;
  auto y = [&](double v) { return T + (1.0 - v / top) * (H - T - B); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = top * k / 4.0;
    os << "<line x1=\"" << L << "\" x2=\"" << W - 20 << "\" y1=\"" << y(v) << "\" y2=\"" << y(v) << "\" stroke=\"#ddd\"/>";
    os << "<text x=\"" << L - 8 << "\" y=\"" << y(v) + 4 << "\" text-anchor=\"end\">" << v * 100 << "</text>\n";
  }
  os << "<text x=\"15\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 15 " << (T + H - B) / 2
     << ")\" text-anchor=\"middle\">average forgetting (%)</text>\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const double v = runs[i].table.avg_forgetting.empty() ? 0.0 : runs[i].table.avg_forgetting.back();
    const double x0 = L + bw * static_cast<double>(i) + bw * 0.15;
    os << "<rect x=\"" << x0 << "\" y=\"" << y(v) << "\" width=\"" << bw * 0.7 << "\" height=\"" << y(0) - y(v) << "\" fill=\""
       << detail::palette(i) << "\"/>";
    const double cx = x0 + bw * 0.35, cy = H - B + 12;
    os << "<text x=\"" << cx << "\" y=\"" << cy << "\" transform=\"rotate(40 " << cx << ' ' << cy << ")\">" << detail::svg_escape(runs[i].name)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace ross
