#pragma once

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ross/error.hpp"

namespace ross {

/// acc[l][j]: top-1 accuracy on task j's test set after training task l (j <= l).
/// Task indices are zero-based.
struct AccuracyMatrix {
  std::vector<std::vector<double>> acc;
  std::vector<long> test_sizes;  // per task; weights for the pooled accuracy

  int tasks_evaluated() const noexcept { return static_cast<int>(acc.size()); }

  void append_row(std::vector<double> row) {
    require(row.size() == acc.size() + 1, "AccuracyMatrix: row " + std::to_string(acc.size()) + " must have " +
                                              std::to_string(acc.size() + 1) + " entries");
    for (double v : row) require(v >= 0.0 && v <= 1.0, "AccuracyMatrix: accuracy outside [0,1]");
    acc.push_back(std::move(row));
  }

  friend bool operator==(const AccuracyMatrix&, const AccuracyMatrix&) = default;
};

/// Pooled top-1 accuracy over every seen task's test set after `after_task`.
inline double average_accuracy(const AccuracyMatrix& m, int after_task) {
  require(after_task >= 0 && after_task < m.tasks_evaluated(), "average_accuracy: task index out of range");
  double num = 0, den = 0;
  for (int j = 0; j <= after_task; ++j) {
    const double w = j < static_cast<int>(m.test_sizes.size()) ? static_cast<double>(m.test_sizes[j]) : 1.0;
    num += w * m.acc[after_task][j];
    den += w;
  }
  return den > 0 ? num / den : 0.0;
}

/// Mean over earlier tasks of (best accuracy seen so far - final accuracy).
/// The final row is part of the history, so each term is >= 0.
inline double average_forgetting(const AccuracyMatrix& m, int after_task) {
  require(after_task >= 1, "average_forgetting: needs at least two tasks");
  require(after_task < m.tasks_evaluated(), "average_forgetting: task index out of range");
  double s = 0;
  for (int j = 0; j < after_task; ++j) {
    double best = 0;
    for (int l = j; l <= after_task; ++l) best = std::max(best, m.acc[l][j]);
    s += best - m.acc[after_task][j];
  }
  return s / after_task;
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// One row per evaluated task: per-task accuracies, pooled accuracy, forgetting;
/// a trailing `test_size` row carries the pooling weights.
inline void write_metrics_csv(std::ostream& os, const AccuracyMatrix& m, int total_tasks) {
  os << "after_task";
  for (int j = 0; j < total_tasks; ++j) os << ",task_" << j;
  os << ",avg_accuracy,avg_forgetting\n";
  for (int l = 0; l < m.tasks_evaluated(); ++l) {
    os << l;
    for (int j = 0; j < total_tasks; ++j) {
      os << ',';
      if (j <= l) os << format_real(m.acc[l][j]);
    }
    os << ',' << format_real(average_accuracy(m, l)) << ',';
    if (l >= 1) os << format_real(average_forgetting(m, l));
    os << '\n';
  }
  os << "test_size";
  for (int j = 0; j < total_tasks; ++j) {
    os << ',';
    if (j < static_cast<int>(m.test_sizes.size())) os << m.test_sizes[j];
  }
  os << ",,\n";
}

namespace detail {
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}
}  // namespace detail

struct MetricsTable {
  AccuracyMatrix matrix;
  int total_tasks = 0;
  std::vector<double> avg_accuracy;
  std::vector<double> avg_forgetting;  // NaN-free; entry 0 is 0
};

inline MetricsTable read_metrics_csv(std::istream& is) {
  MetricsTable t;
  std::string line;
  if (!std::getline(is, line)) throw ParseError("metrics: empty table");
  const auto header = detail::split_csv(line);
  if (header.size() < 3 || header[0] != "after_task") throw ParseError("metrics: bad header");
  t.total_tasks = static_cast<int>(header.size()) - 3;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = detail::split_csv(line);
    cells.resize(header.size());
    try {
      if (cells[0] == "test_size") {
        for (int j = 0; j < t.total_tasks; ++j)
          if (!cells[1 + j].empty()) t.matrix.test_sizes.push_back(std::stol(cells[1 + j]));
        continue;
      }
      const int l = std::stoi(cells[0]);
      if (l != t.matrix.tasks_evaluated()) throw ParseError("metrics line " + std::to_string(line_no) + ": rows out of order");
      std::vector<double> row;
      for (int j = 0; j <= l; ++j) row.push_back(std::stod(cells[1 + j]));
      t.matrix.append_row(std::move(row));
      t.avg_accuracy.push_back(std::stod(cells[1 + t.total_tasks]));
      const auto& f = cells[2 + t.total_tasks];
      t.avg_forgetting.push_back(f.empty() ? 0.0 : std::stod(f));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError("metrics line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return t;
}

}  // namespace ross
