#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dqfl/metrics.hpp"
#include "oracles.hpp"

using namespace dqfl;

TEST(AlphaUtility, Branches) {
  EXPECT_DOUBLE_EQ(alpha_utility(std::numbers::e, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(alpha_utility(5.0, 0.0), 5.0);
  EXPECT_DOUBLE_EQ(alpha_utility(4.0, 2.0), -0.25);
  EXPECT_DOUBLE_EQ(alpha_utility(9.0, 0.5), 6.0);
  EXPECT_THROW(alpha_utility(0.0, 1.0), DomainError);
  EXPECT_THROW(alpha_utility(-1.0, 0.0), DomainError);
  EXPECT_THROW(alpha_utility(1.0, -0.5), DomainError);
}

TEST(AlphaUtility, ExactLogBranchIsNotALimit) {
  // Printed form: x^(1-a)/(1-a) without the -1, so nearby alphas diverge from ln x.
  EXPECT_EQ(alpha_utility(2.0, 1.0), std::log(2.0));
  EXPECT_GT(std::abs(alpha_utility(2.0, 1.0 + 1e-6) - std::log(2.0)), 1e3);
}

TEST(AlphaUtility, IncreasingAndConcaveOnGrid) {
  for (double alpha : {0.0, 0.25, 0.5, 0.9, 1.0, 1.5, 2.0, 3.0, 5.0}) {
    for (double x = 0.05; x < 5.0; x += 0.05) {
      const double h = 0.01;
      const double lo = alpha_utility(x, alpha), mid = alpha_utility(x + h, alpha), hi = alpha_utility(x + 2 * h, alpha);
      EXPECT_GT(mid, lo) << "alpha " << alpha << " x " << x;
      EXPECT_GE(mid - lo - (hi - mid), -1e-12) << "concavity, alpha " << alpha << " x " << x;
    }
  }
}

TEST(FairnessReport, PerfectFairness) {
  const std::vector<double> acc(7, 0.6);
  const auto r = fairness_report(acc, 1.0);
  EXPECT_NEAR(r.mean_accuracy, 0.6, 1e-15);
  EXPECT_NEAR(r.worst_decile, 0.6, 1e-15);
  EXPECT_NEAR(r.best_decile, 0.6, 1e-15);
  EXPECT_NEAR(r.variance_pct2, 0.0, 1e-12);
  EXPECT_NEAR(r.jain, 1.0, 1e-15);
  EXPECT_NEAR(r.gini, 0.0, 1e-15);
  EXPECT_NEAR(r.alpha_utility_sum, 7 * std::log(0.6), 1e-12);
}

TEST(FairnessReport, TwoPointJainAndGini) {
  const auto r = fairness_report(std::vector<double>{0.0, 1.0}, 0.0);
  EXPECT_DOUBLE_EQ(r.jain, 0.5);
  EXPECT_DOUBLE_EQ(r.gini, 0.5);
  EXPECT_DOUBLE_EQ(r.worst_decile, 0.0);
  EXPECT_DOUBLE_EQ(r.best_decile, 1.0);
  EXPECT_DOUBLE_EQ(r.variance_pct2, 2500.0);
}

TEST(FairnessReport, ReplaysTableScaleSummary) {
  // Ten clients at 80.1 +/- sqrt(331) percent: mean 80.1, population variance 331.
  const double sd = std::sqrt(331.0) / 100.0;
  std::vector<double> acc;
  for (int i = 0; i < 5; ++i) {
    acc.push_back(0.801 - sd);
    acc.push_back(0.801 + sd);
  }
  const auto r = fairness_report(acc, 1.0);
  EXPECT_NEAR(100.0 * r.mean_accuracy, 80.1, 1e-10);
  EXPECT_NEAR(r.variance_pct2, 331.0, 1e-9);
}

TEST(FairnessReport, DecilesUseCeilingOfTenth) {
  std::vector<double> acc;
  for (int i = 0; i < 25; ++i) acc.push_back(i / 24.0);
  const auto r = fairness_report(acc, 1.0);
  // ceil(25/10) = 3 lowest / highest
  EXPECT_NEAR(r.worst_decile, (0 + 1 + 2) / 72.0, 1e-15);
  EXPECT_NEAR(r.best_decile, (22 + 23 + 24) / 72.0, 1e-15);
  // K < 10: single min / max client.
  const auto small = fairness_report(std::vector<double>{0.3, 0.9, 0.5}, 1.0);
  EXPECT_DOUBLE_EQ(small.worst_decile, 0.3);
  EXPECT_DOUBLE_EQ(small.best_decile, 0.9);
}

TEST(FairnessReport, InvariantsOnRandomVectors) {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 1 + rng.uniform_index(60);
    std::vector<double> acc(k);
    for (auto& a : acc) a = rng.uniform();
    const auto r = fairness_report(acc, 0.5);
    EXPECT_LE(r.worst_decile, r.mean_accuracy + 1e-15);
    EXPECT_LE(r.mean_accuracy, r.best_decile + 1e-15);
    EXPECT_GE(r.variance_pct2, 0.0);
    EXPECT_NEAR(r.variance_pct2, 1e4 * oracle::variance(acc), 1e-8);
    EXPECT_GE(r.jain, 1.0 / k - 1e-12);
    EXPECT_LE(r.jain, 1.0 + 1e-12);
    EXPECT_GE(r.gini, 0.0);
    EXPECT_LT(r.gini, 1.0);

    // Scale invariance of Jain and Gini.
    auto scaled = acc;
    for (auto& a : scaled) a *= 0.37;
    EXPECT_NEAR(jain_index(scaled), r.jain, 1e-12);
    EXPECT_NEAR(gini_coefficient(scaled), r.gini, 1e-12);
  }
}

TEST(FairnessReport, GiniMatchesMeanAbsoluteDifference) {
  // Independent oracle: G = sum_i sum_j |x_i - x_j| / (2 n^2 mean).
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(1 + rng.uniform_index(30));
    for (auto& v : x) v = rng.uniform();
    double num = 0.0, total = 0.0;
    for (double a : x) {
      total += a;
      for (double b : x) num += std::abs(a - b);
    }
    const double n = static_cast<double>(x.size());
    EXPECT_NEAR(gini_coefficient(x), num / (2.0 * n * total), 1e-12);
  }
}

TEST(FairnessReport, ZeroAccuracyStaysInUtilityDomain) {
  const auto r = fairness_report(std::vector<double>{0.0, 0.5}, 1.0);
  EXPECT_NEAR(r.alpha_utility_sum, std::log(kUtilityFloor) + std::log(0.5), 1e-12);
  EXPECT_THROW(fairness_report(std::vector<double>{}, 1.0), ContractError);
}

TEST(Histogram, SingleBinAndUniformGrid) {
  const auto one = histogram(std::vector<double>(9, 0.42), 0.1);
  ASSERT_EQ(one.size(), 10u);
  for (std::size_t i = 0; i < one.size(); ++i) EXPECT_EQ(one[i].count, i == 4 ? 9u : 0u);

  std::vector<double> grid;
  for (int i = 0; i < 10; ++i) grid.push_back(i / 10.0);
  for (const auto& b : histogram(grid, 0.1)) EXPECT_EQ(b.count, 1u);

  const auto top = histogram(std::vector<double>{1.0}, 0.25);
  EXPECT_EQ(top.back().count, 1u);
  EXPECT_THROW(histogram(grid, 0.0), ContractError);
}

TEST(Histogram, MatchesNaiveCounting) {
  Rng rng(7);
  std::vector<double> v(500);
  for (auto& x : v) x = rng.uniform();
  const double width = 0.05;
  const auto h = histogram(v, width);
  std::size_t total = 0;
  for (std::size_t b = 0; b < h.size(); ++b) {
    std::size_t naive = 0;
    for (double x : v)
      if (x >= b * width && (x < (b + 1) * width || (b + 1 == h.size() && x <= 1.0))) ++naive;
    EXPECT_EQ(h[b].count, naive) << "bin " << b;
    total += h[b].count;
  }
  EXPECT_EQ(total, v.size());
}
