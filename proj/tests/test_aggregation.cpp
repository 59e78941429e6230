#include <gtest/gtest.h>

#include <cmath>

#include "dqfl/aggregation.hpp"
#include "oracles.hpp"

using namespace dqfl;

namespace {

std::vector<ClientReport> reports_with_losses(const std::vector<double>& losses) {
  std::vector<ClientReport> r(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) {
    r[i].client_id = 3 * i + 1;
    r[i].reported_loss = losses[i];
  }
  return r;
}

std::vector<double> weights_of(const WeightVector& w) {
  std::vector<double> out;
  for (const auto& e : w.entries) out.push_back(e.second);
  return out;
}

}  // namespace

TEST(FedAvgWeights, ProportionalToDataSize) {
  const auto r = reports_with_losses({1.0, 1.0});
  // s = (100, 300) out of a larger federation: p renormalizes over the selected pair.
  const std::vector<double> p{100.0 / 1000, 300.0 / 1000};
  const auto w = weights_of(fedavg_weights(r, p));
  EXPECT_NEAR(w[0], 0.25, 1e-15);
  EXPECT_NEAR(w[1], 0.75, 1e-15);
}

TEST(FedAvgWeights, EqualSizesAndSingleClient) {
  const auto r = reports_with_losses({0.3, 2.0, 1.0, 0.1});
  for (double w : weights_of(fedavg_weights(r, std::vector<double>(4, 0.01)))) EXPECT_NEAR(w, 0.25, 1e-15);
  const auto one = reports_with_losses({0.7});
  EXPECT_EQ(weights_of(fedavg_weights(one, std::vector<double>{0.2})), std::vector<double>{1.0});
}

TEST(DqfflWeights, QZeroIsBitIdenticalToFedAvg) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.uniform_index(12);
    std::vector<double> losses(m), p(m);
    for (std::size_t i = 0; i < m; ++i) {
      losses[i] = std::exp(rng.uniform(-5, 5));
      p[i] = rng.uniform(0.001, 0.2);
    }
    const auto r = reports_with_losses(losses);
    EXPECT_EQ(dqffl_weights(r, p, 0.0), fedavg_weights(r, p));
  }
}

TEST(DqfflWeights, DirectRatios) {
  auto w = weights_of(dqffl_weights(reports_with_losses({2.0, 1.0}), std::vector<double>{0.5, 0.5}, 1.0));
  EXPECT_NEAR(w[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(w[1], 1.0 / 3.0, 1e-15);
  // p = (0.25, 0.75), F = (4, 1), q = 2: unnormalized (4.0, 0.75).
  w = weights_of(dqffl_weights(reports_with_losses({4.0, 1.0}), std::vector<double>{0.25, 0.75}, 2.0));
  EXPECT_NEAR(w[0], 4.0 / 4.75, 1e-15);
  EXPECT_NEAR(w[1], 0.75 / 4.75, 1e-15);
  EXPECT_NEAR(w[0], 0.8421052631578947, 1e-15);
}

TEST(DqfflWeights, LossFloorKeepsWeightsPositive) {
  const auto w = weights_of(dqffl_weights(reports_with_losses({0.0, 1.0}), std::vector<double>{0.5, 0.5}, 2.0));
  EXPECT_GT(w[0], 0.0);
  EXPECT_NEAR(w[0], 1e-16 / (1.0 + 1e-16), 1e-30);
}

TEST(DqfflWeights, NoOverflowForLargeQAndLosses) {
  const auto w = weights_of(dqffl_weights(reports_with_losses({1e3, 9e2, 1.0}), std::vector<double>{0.3, 0.3, 0.4}, 10.0));
  for (double x : w) EXPECT_TRUE(std::isfinite(x));
  EXPECT_NEAR(w[0] + w[1] + w[2], 1.0, 1e-12);
  EXPECT_NEAR(w[1] / w[0], std::pow(0.9, 10.0), 1e-12);
}

TEST(DqfflWeights, Contracts) {
  const auto r = reports_with_losses({1.0, NAN});
  EXPECT_THROW(dqffl_weights(r, std::vector<double>{0.5, 0.5}, 1.0), ContractError);
  const auto ok = reports_with_losses({1.0, 2.0});
  EXPECT_THROW(dqffl_weights(ok, std::vector<double>{0.5, 0.5}, -1.0), ContractError);
  EXPECT_THROW(dqffl_weights(ok, std::vector<double>{0.5}, 1.0), ContractError);
  auto unsorted = ok;
  std::swap(unsorted[0], unsorted[1]);
  EXPECT_THROW(fedavg_weights(unsorted, std::vector<double>{0.5, 0.5}), ContractError);
}

// Randomized invariants over many calls: simplex, monotonicity at equal shares,
// and exact invariance under scaling all losses.
TEST(DqfflWeights, PropertySimplexMonotoneScaleInvariant) {
  Rng rng(2024);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t m = 1 + rng.uniform_index(15);
    const double q = rng.uniform(0.05, 10.0);
    std::vector<double> losses(m), p(m);
    for (std::size_t i = 0; i < m; ++i) {
      losses[i] = std::exp(rng.uniform(std::log(1e-3), std::log(1e3)));
      p[i] = rng.uniform(0.001, 1.0);
    }
    const auto r = reports_with_losses(losses);
    const auto w = weights_of(dqffl_weights(r, p, q));
    double sum = 0.0;
    for (double x : w) {
      ASSERT_GE(x, 0.0);
      sum += x;
    }
    ASSERT_NEAR(sum, 1.0, 1e-9);

    const std::vector<double> equal(m, 1.0 / static_cast<double>(m));
    const auto we = weights_of(dqffl_weights(r, equal, q));
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        if (losses[a] > losses[b] * (1.0 + 1e-9)) {
          ASSERT_GT(we[a], we[b]);
        }

    const double c = std::exp(rng.uniform(-3.0, 3.0));
    auto scaled = losses;
    for (auto& l : scaled) l *= c;
    const auto ws = weights_of(dqffl_weights(reports_with_losses(scaled), p, q));
    for (std::size_t i = 0; i < m; ++i) ASSERT_NEAR(ws[i], w[i], 1e-12);
  }
}

TEST(Aggregate, SingleClientPassesThrough) {
  auto r = reports_with_losses({1.0});
  r[0].updated_params = ParamVector(std::vector<double>{0.1, -2.0, 3.5});
  const auto out = aggregate(r, fedavg_weights(r, std::vector<double>{0.3}));
  EXPECT_EQ(out, r[0].updated_params);
}

TEST(Aggregate, IdenticalVectorsStayPut) {
  auto r = reports_with_losses({1.0, 2.0, 3.0});
  for (auto& x : r) x.updated_params = ParamVector(std::vector<double>{1.5, -0.25, 7.0});
  const auto out = aggregate(r, dqffl_weights(r, std::vector<double>{0.2, 0.3, 0.5}, 2.0));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out[i], r[0].updated_params[i], 1e-15);
}

TEST(Aggregate, MatchesNaiveWeightedSum) {
  Rng rng(3);
  auto r = reports_with_losses({1.0, 1.0, 1.0});
  for (auto& x : r) x.updated_params = oracle::random_params(rng, 25, 2.0);
  const std::vector<double> p{0.2, 0.3, 0.5};
  const auto out = aggregate(r, fedavg_weights(r, p));
  for (std::size_t j = 0; j < 25; ++j) {
    long double expect = 0;
    for (std::size_t k = 0; k < 3; ++k) expect += static_cast<long double>(p[k]) * r[k].updated_params[j];
    EXPECT_NEAR(out[j], static_cast<double>(expect), 1e-12);
  }
}

TEST(Aggregate, Contracts) {
  auto r = reports_with_losses({1.0, 1.0});
  r[0].updated_params = ParamVector(3);
  r[1].updated_params = ParamVector(4);
  EXPECT_THROW(aggregate(r, fedavg_weights(r, std::vector<double>{0.5, 0.5})), ContractError);
  WeightVector w;
  w.entries = {{1, 1.0}};
  EXPECT_THROW(aggregate(r, w), ContractError);
}

TEST(WeightedLoss, ObjectiveWithPreviousWeights) {
  // sum_k w_k F_k with w from the q applied to the same losses.
  const auto r = reports_with_losses({4.0, 1.0});
  const auto w = dqffl_weights(r, std::vector<double>{0.25, 0.75}, 2.0);
  EXPECT_NEAR(weighted_loss(r, w), (4.0 * 4.0 + 0.75 * 1.0) / 4.75, 1e-14);
}

TEST(StrategyConfig, LabelsAndValidation) {
  EXPECT_EQ(StrategyConfig{}.label(), "fedavg");
  EXPECT_EQ((StrategyConfig{StrategyKind::kStaticQ, 1.0}).label(), "static_q(1)");
  EXPECT_EQ((StrategyConfig{StrategyKind::kStaticQ, 0.5}).label(), "static_q(0.5)");
  EXPECT_EQ((StrategyConfig{StrategyKind::kDynamicQ}).label(), "dynamic_q");
  EXPECT_THROW((StrategyConfig{StrategyKind::kStaticQ, 1.0, 0.1}).validate(), ConfigError);
}
