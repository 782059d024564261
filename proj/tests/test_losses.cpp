#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ross/losses.hpp"

using namespace ross;

namespace {

MapPair random_pair(std::mt19937_64& gen, int h, int w) { return {oracle::random_map(gen, h, w), oracle::random_map(gen, h, w)}; }

std::vector<double> flatten(const MapPair& p) {
  std::vector<double> v(p.saliency.storage());
  v.insert(v.end(), p.boundary.storage().begin(), p.boundary.storage().end());
  return v;
}

MapPair unflatten(const std::vector<double>& v, int h, int w) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  return {SaliencyMap(h, w, std::vector<double>(v.begin(), v.begin() + n)), SaliencyMap(h, w, std::vector<double>(v.begin() + n, v.end()))};
}

}  // namespace

TEST(CrossEntropy, Examples) {
  EXPECT_NEAR(cross_entropy(std::vector<double>(7, 0.3), 2), std::log(7.0), 1e-15);
  EXPECT_LE(cross_entropy(std::vector<double>{1000, 0}, 0), 1e-6);
  EXPECT_NEAR(cross_entropy(std::vector<double>{0, std::log(3.0)}, 0), std::log(4.0), 1e-15);
  EXPECT_THROW(cross_entropy(std::vector<double>{0, 1}, 2), InvalidArgument);
  EXPECT_THROW(cross_entropy(std::vector<double>{0, 1}, -1), InvalidArgument);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> z(6);
    for (auto& v : z) v = u(gen);
    const int label = i % 6;
    const auto g = cross_entropy_grad(z, label);
    const auto n = oracle::numeric_gradient([&](const std::vector<double>& x) { return cross_entropy(x, label); }, z);
    EXPECT_LT(oracle::max_relative_error(g, n), 1e-7);
  }
}

TEST(LowLevelLoss, Examples) {
  std::mt19937_64 gen(2);
  const auto t = random_pair(gen, 6, 6);
  EXPECT_EQ(low_level_loss(t, t), 0.0);
  MapPair s = t;
  for (auto& v : s.saliency.values()) v += 0.1;
  for (auto& v : s.boundary.values()) v -= 0.1;
  EXPECT_NEAR(low_level_loss(s, t), 0.1, 1e-12);
  MapPair h = t;
  for (auto& v : h.boundary.values()) v += 0.2;
  EXPECT_NEAR(low_level_loss(h, t), 0.1, 1e-12);
  EXPECT_NEAR(low_level_mae(h, t), 0.1, 1e-12);
  MapPair bad{SaliencyMap(5, 6), SaliencyMap(6, 6)};
  EXPECT_THROW(low_level_loss(bad, t), InvalidArgument);
}

TEST(LowLevelLoss, Symmetric) {
  std::mt19937_64 gen(3);
  for (int i = 0; i < 20; ++i) {
    const auto a = random_pair(gen, 5, 7), b = random_pair(gen, 5, 7);
    EXPECT_EQ(low_level_loss(a, b), low_level_loss(b, a));
  }
}

TEST(LowLevelLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(4);
  for (int i = 0; i < 20; ++i) {
    const auto s = random_pair(gen, 8, 8), t = random_pair(gen, 8, 8);
    const auto g = low_level_loss_grad(s, t);
    const auto n = oracle::numeric_gradient([&](const std::vector<double>& x) { return low_level_loss(unflatten(x, 8, 8), t); }, flatten(s));
    EXPECT_LT(oracle::max_relative_error(flatten(g), n), 1e-4);
  }
}

TEST(DbsLoss, Examples) {
  const BinaryMap mask(3, 3, 1);
  EXPECT_EQ(dbs_loss(SaliencyMap(3, 3), mask), 0.0);
  BinaryMap corner(2, 2);
  corner(0, 0) = 1;
  SaliencyMap s(2, 2, std::vector<double>{0.5, 0.9, 0.9, 0.9});
  EXPECT_NEAR(dbs_loss(s, corner), std::log(2.0), 1e-15);
  DbsDiagnostics diag;
  EXPECT_EQ(dbs_loss(s, BinaryMap(2, 2), &diag), 0.0);
  EXPECT_EQ(diag.empty_regions.load(), 1);
  EXPECT_EQ(diag.evaluations.load(), 1);
}

TEST(DbsLoss, RejectsSaturatedStudent) {
  BinaryMap mask(2, 2, 1);
  SaliencyMap s(2, 2, 0.2);
  s[3] = 1.0;
  EXPECT_THROW(dbs_loss(s, mask), InvalidArgument);
  mask[3] = 0;
  EXPECT_NO_THROW(dbs_loss(s, mask));  // unmasked pixels are not inspected
  EXPECT_THROW(dbs_loss(s, BinaryMap(3, 2)), InvalidArgument);
}

TEST(DbsLoss, NonNegativeMonotoneAndBlindOutsideMask) {
  std::mt19937_64 gen(5);
  for (int i = 0; i < 50; ++i) {
    const auto mask = oracle::random_binary(gen, 8, 8, 0.4);
    auto s = oracle::random_map(gen, 8, 8, 0.0, 0.95);
    const double base = dbs_loss(s, mask);
    EXPECT_GE(base, 0.0);
    for (std::size_t k = 0; k < s.size(); ++k) {
      auto t = s;
      t[k] = std::min(t[k] + 0.01, 0.99);
      if (mask[k]) EXPECT_GT(dbs_loss(t, mask), base);
      else EXPECT_EQ(dbs_loss(t, mask), base);
    }
  }
}

TEST(DbsLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(6);
  for (int i = 0; i < 20; ++i) {
    auto mask = oracle::random_binary(gen, 8, 8, 0.5);
    mask[0] = 1;
    const auto s = oracle::random_map(gen, 8, 8, 0.0, 0.9);
    const auto g = dbs_loss_grad(s, mask);
    const auto n = oracle::numeric_gradient([&](const std::vector<double>& x) { return dbs_loss(SaliencyMap(8, 8, x), mask); }, s.storage());
    EXPECT_LT(oracle::max_relative_error(g.storage(), n), 1e-4);
  }
}

TEST(LwfDistill, Examples) {
  const std::vector<double> z{0, std::log(3.0)};
  EXPECT_NEAR(lwf_distill(z, z, 1.0), -(0.25 * std::log(0.25) + 0.75 * std::log(0.75)), 1e-12);
  EXPECT_NEAR(lwf_distill(z, z, 1.0), 0.5623, 1e-4);
  for (double g : lwf_distill_grad(z, z, 2.0)) EXPECT_NEAR(g, 0.0, 1e-16);
  const std::vector<double> a{3, -1, 0.5}, b{-2, 4, 1};
  EXPECT_NEAR(lwf_distill(a, b, 1e6), std::log(3.0), 1e-4);
  EXPECT_THROW(lwf_distill(a, z, 1.0), InvalidArgument);
  EXPECT_THROW(lwf_distill(a, b, 0.0), InvalidArgument);
}

TEST(LwfDistill, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> old(5), cur(5);
    for (auto& v : old) v = u(gen);
    for (auto& v : cur) v = u(gen);
    const auto g = lwf_distill_grad(old, cur, 2.0);
    const auto n = oracle::numeric_gradient([&](const std::vector<double>& x) { return lwf_distill(old, x, 2.0); }, cur);
    EXPECT_LT(oracle::max_relative_error(g, n), 1e-6);
  }
}

TEST(TotalLoss, Composition) {
  EXPECT_EQ(total_loss({}).total, 0.0);
  const auto b = total_loss({1.0, 0.5, 0.2, {0.3, 0.3, 0.3}});
  EXPECT_NEAR(b.total, 2.0, 1e-15);
  EXPECT_NEAR(b.dbs, 0.3, 1e-15);
  const auto avg = total_loss({0, 0, 0, {0.1, 0.2, 0.6}});
  EXPECT_NEAR(avg.dbs, 0.3, 1e-15);
  const auto weighted = total_loss({1.0, 0.5, 0.2, {0.4}}, {2.0, 0.5});
  EXPECT_NEAR(weighted.total, 1.0 + 0.5 + 0.4 + 0.2, 1e-15);
}

TEST(TotalLoss, ZeroCoefficientsRecoverClassificationLoss) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0, 5);
  for (int i = 0; i < 100; ++i) {
    const double ce = u(gen), m = u(gen);
    EXPECT_EQ(total_loss({ce, m, u(gen), {u(gen), u(gen), u(gen)}}, {0.0, 0.0}).total, ce + m);
  }
}

TEST(TotalLoss, NonFiniteRejected) {
  EXPECT_THROW(total_loss({std::nan(""), 0, 0, {}}), NumericalError);
  EXPECT_THROW(total_loss({0, 0, 0, {INFINITY}}), NumericalError);
}
