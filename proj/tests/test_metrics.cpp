#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "ross/metrics.hpp"

using namespace ross;

namespace {

AccuracyMatrix build(std::vector<std::vector<double>> rows, std::vector<long> sizes = {}) {
  AccuracyMatrix m;
  for (auto& r : rows) m.append_row(r);
  m.test_sizes = std::move(sizes);
  return m;
}

// Column-wise recomputation: running max per column, then final differences.
double sheet_forgetting(const std::vector<std::vector<double>>& a, int T) {
  std::vector<double> best(T, -1.0);
  for (int l = 0; l <= T; ++l)
    for (int j = 0; j <= std::min(l, T - 1); ++j)
      if (a[l][j] > best[j]) best[j] = a[l][j];
  double total = 0;
  for (int j = 0; j < T; ++j) total += best[j] - a[T][j];
  return total / T;
}

double sheet_accuracy(const std::vector<std::vector<double>>& a, const std::vector<long>& n, int T) {
  long seen = 0;
  double correct = 0;
  for (int j = 0; j <= T; ++j) {
    correct += a[T][j] * static_cast<double>(n[j]);
    seen += n[j];
  }
  return correct / static_cast<double>(seen);
}

}  // namespace

TEST(AverageAccuracy, SpecExamples) {
  EXPECT_DOUBLE_EQ(average_accuracy(build({{0.8}}, {50}), 0), 0.8);
  EXPECT_DOUBLE_EQ(average_accuracy(build({{0.7}, {0.6, 0.9}}, {100, 100}), 1), 0.75);
  EXPECT_DOUBLE_EQ(average_accuracy(build({{1}, {1, 1}, {1, 1, 1}}, {3, 9, 4}), 2), 1.0);
}

TEST(AverageAccuracy, IsSampleWeighted) {
  const auto m = build({{0.5}, {0.5, 1.0}}, {300, 100});
  EXPECT_DOUBLE_EQ(average_accuracy(m, 1), (0.5 * 300 + 1.0 * 100) / 400);
  EXPECT_THROW(average_accuracy(m, 2), InvalidArgument);
  EXPECT_THROW(average_accuracy(m, -1), InvalidArgument);
}

TEST(AverageForgetting, SpecExamples) {
  EXPECT_DOUBLE_EQ(average_forgetting(build({{0.9}, {0.9, 0.8}, {0.9, 0.8, 0.7}}), 2), 0.0);
  EXPECT_NEAR(average_forgetting(build({{0.8}, {0.6, 0.9}}), 1), 0.2, 1e-15);
  // task 0 history (0.9, 0.7, 0.8): contribution 0.1; task 1 (0.5, 0.5): 0
  EXPECT_NEAR(average_forgetting(build({{0.9}, {0.7, 0.5}, {0.8, 0.5, 0.6}}), 2), 0.1 / 2, 1e-15);
  // an improved task contributes zero, not negative forgetting
  EXPECT_DOUBLE_EQ(average_forgetting(build({{0.4}, {0.9, 0.5}}), 1), 0.0);
  EXPECT_THROW(average_forgetting(build({{0.9}}), 0), InvalidArgument);
  EXPECT_THROW(average_forgetting(build({{0.9}, {0.1, 0.2}}), 2), InvalidArgument);
}

TEST(Metrics, HandMatricesMatchRecomputation) {
  const std::vector<std::vector<std::vector<double>>> cases{
      {{0.95}, {0.61, 0.88}, {0.42, 0.70, 0.91}},
      {{0.5}, {0.75, 0.25}, {0.6, 0.3, 1.0}},
      {{1.0}, {0.0, 1.0}, {0.33, 0.66, 0.99}},
  };
  const std::vector<std::vector<long>> sizes{{200, 100, 100}, {40, 40, 40}, {7, 13, 29}};
  for (std::size_t k = 0; k < cases.size(); ++k) {
    const auto m = build(cases[k], sizes[k]);
    for (int T = 0; T < 3; ++T) {
      EXPECT_NEAR(average_accuracy(m, T), sheet_accuracy(cases[k], sizes[k], T), 1e-12);
      if (T >= 1) EXPECT_NEAR(average_forgetting(m, T), sheet_forgetting(cases[k], T), 1e-12);
    }
  }
  // worked by hand for the first matrix
  EXPECT_NEAR(average_forgetting(build(cases[0]), 2), ((0.95 - 0.42) + (0.88 - 0.70)) / 2, 1e-12);
  EXPECT_NEAR(average_accuracy(build(cases[0], sizes[0]), 2), (0.42 * 200 + 0.70 * 100 + 0.91 * 100) / 400, 1e-12);
}

TEST(Metrics, ForgettingBoundedOnRandomMatrices) {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> tasks(2, 11);
  for (int trial = 0; trial < 1000; ++trial) {
    const int T = tasks(gen);
    std::vector<std::vector<double>> rows;
    for (int l = 0; l < T; ++l) {
      std::vector<double> r(l + 1);
      for (auto& v : r) v = u(gen);
      rows.push_back(r);
    }
    const auto m = build(rows);
    for (int t = 1; t < T; ++t) {
      const double f = average_forgetting(m, t);
      EXPECT_GE(f, 0.0);
      EXPECT_LE(f, 1.0);
      EXPECT_NEAR(f, sheet_forgetting(rows, t), 1e-12);
    }
  }
}

TEST(AccuracyMatrix, RejectsBadRows) {
  AccuracyMatrix m;
  EXPECT_THROW(m.append_row({0.5, 0.5}), InvalidArgument);
  EXPECT_THROW(m.append_row({1.5}), InvalidArgument);
  EXPECT_THROW(m.append_row({-0.1}), InvalidArgument);
  m.append_row({0.5});
  EXPECT_THROW(m.append_row({0.5}), InvalidArgument);
}

TEST(MetricsCsv, RoundTrip) {
  const auto m = build({{0.95}, {0.61, 0.88}, {0.42, 0.70, 1.0 / 3}}, {200, 100, 100});
  std::stringstream ss;
  write_metrics_csv(ss, m, 4);
  const auto text = ss.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "after_task,task_0,task_1,task_2,task_3,avg_accuracy,avg_forgetting");
  const auto t = read_metrics_csv(ss);
  EXPECT_EQ(t.total_tasks, 4);
  EXPECT_EQ(t.matrix, m);
  ASSERT_EQ(t.avg_accuracy.size(), 3u);
  for (int l = 0; l < 3; ++l) EXPECT_EQ(t.avg_accuracy[l], average_accuracy(m, l));
  EXPECT_EQ(t.avg_forgetting[0], 0.0);
  EXPECT_EQ(t.avg_forgetting[2], average_forgetting(m, 2));
}

TEST(MetricsCsv, MalformedInput) {
  std::istringstream empty("");
  EXPECT_THROW(read_metrics_csv(empty), ParseError);
  std::istringstream bad_header("x,y\n");
  EXPECT_THROW(read_metrics_csv(bad_header), ParseError);
  std::istringstream out_of_order("after_task,task_0,task_1,avg_accuracy,avg_forgetting\n1,0.5,0.5,0.5,0\n");
  EXPECT_THROW(read_metrics_csv(out_of_order), ParseError);
  std::istringstream bad_cell("after_task,task_0,task_1,avg_accuracy,avg_forgetting\n0,abc,,0.5,\n");
  EXPECT_THROW(read_metrics_csv(bad_cell), ParseError);
}
