#include <gtest/gtest.h>

#include <set>

#include "dqfl/local_trainer.hpp"
#include "oracles.hpp"

using namespace dqfl;

namespace {

const ModelSpec kSpec{ModelKind::kLogistic, 3, 2, 0, 0.1};

ClientShard make_shard(std::size_t id, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  ClientShard s;
  s.client_id = id;
  s.train = oracle::random_batch(rng, n, 3, 2);
  s.test = oracle::random_batch(rng, 2, 3, 2);
  s.validation = oracle::random_batch(rng, 2, 3, 2);
  s.sample_count = n + 4;
  s.share = 1.0;
  return s;
}

ClientShard separable_shard() {
  ClientShard s;
  s.client_id = 0;
  s.train.dim = 3;
  Rng rng(5);
  for (int i = 0; i < 60; ++i) {
    const int y = i % 2;
    const double c = y ? 2.0 : -2.0;
    s.train.push_back(std::vector<double>{c + 0.4 * rng.normal(), c + 0.4 * rng.normal(), 0.4 * rng.normal()}, y);
  }
  s.test = s.train;
  s.validation = s.train;
  s.sample_count = 180;
  return s;
}

}  // namespace

TEST(LocalRound, ZeroLearningRateKeepsModel) {
  const auto shard = make_shard(2, 40, 1);
  const auto global = init_params(kSpec, 9);
  LocalConfig cfg;
  cfg.learning_rate = 0.0;
  const auto rep = local_round(kSpec, shard, global, cfg, 0);
  EXPECT_EQ(rep.updated_params, global);
  EXPECT_GT(rep.reported_loss, 0.0);
  EXPECT_EQ(rep.client_id, 2u);
}

TEST(LocalRound, FullBatchIsSingleGradientStep) {
  const auto shard = make_shard(0, 12, 2);
  const auto global = init_params(kSpec, 3);
  LocalConfig cfg;
  cfg.learning_rate = 0.3;
  cfg.batch_size = 50;
  const auto rep = local_round(kSpec, shard, global, cfg, 4);
  const auto grad = loss_grad(kSpec, global, shard.train).second;
  for (std::size_t i = 0; i < global.size(); ++i) EXPECT_NEAR(rep.updated_params[i], global[i] - 0.3 * grad[i], 1e-14);
  EXPECT_EQ(rep.samples_used, 12u);
  // B >= n: the reported loss is the full-train loss of the incoming model.
  EXPECT_NEAR(rep.reported_loss, loss(kSpec, global, shard.train), 1e-14);
}

TEST(LocalRound, ReportedLossIsOfIncomingModelOnDrawnBatch) {
  const auto shard = make_shard(3, 57, 4);
  const auto global = init_params(kSpec, 5);
  LocalConfig cfg;
  cfg.batch_size = 10;
  cfg.shuffle_seed_base = 77;
  const auto rep = local_round(kSpec, shard, global, cfg, 6);
  const auto idx = loss_batch_indices(57, 10, 77, 3, 6);
  ASSERT_EQ(idx.size(), 10u);
  EXPECT_EQ(rep.reported_loss, loss(kSpec, global, shard.train.subset(idx)));
  EXPECT_NE(rep.reported_loss, loss(kSpec, rep.updated_params, shard.train.subset(idx)));
}

TEST(LocalRound, LossBatchWithoutReplacementFreshEachRound) {
  const auto a = loss_batch_indices(100, 10, 1, 0, 0);
  const auto b = loss_batch_indices(100, 10, 1, 0, 1);
  EXPECT_NE(a, b);
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 10u);
  EXPECT_EQ(loss_batch_indices(7, 10, 1, 0, 0).size(), 7u);
}

TEST(LocalRound, FullTrainLossFlag) {
  const auto shard = make_shard(1, 30, 6);
  const auto global = init_params(kSpec, 1);
  LocalConfig cfg;
  cfg.full_train_loss = true;
  EXPECT_EQ(local_round(kSpec, shard, global, cfg, 0).reported_loss, loss(kSpec, global, shard.train));
}

TEST(LocalRound, DeterministicAndDoesNotMutateInput) {
  const auto shard = make_shard(4, 33, 7);
  const auto global = init_params(kSpec, 2);
  const auto copy = global;
  LocalConfig cfg;
  cfg.local_epochs = 3;
  const auto r1 = local_round(kSpec, shard, global, cfg, 5);
  const auto r2 = local_round(kSpec, shard, global, cfg, 5);
  EXPECT_EQ(r1, r2);
  EXPECT_EQ(global, copy);
  EXPECT_NE(local_round(kSpec, shard, global, cfg, 6).updated_params, r1.updated_params);
}

TEST(LocalRound, UploadBytes) {
  const auto shard = make_shard(0, 20, 8);
  const auto global = init_params(kSpec, 2);
  LocalConfig cfg;
  EXPECT_EQ(local_round(kSpec, shard, global, cfg, 0, LossUpload::kWithLoss).upload_bytes, 8u * 8 + 8);
  EXPECT_EQ(local_round(kSpec, shard, global, cfg, 0, LossUpload::kParamsOnly).upload_bytes, 8u * 8);
}

TEST(MinibatchRanges, DropsTrailingSingleton) {
  EXPECT_EQ(minibatch_ranges(21, 10).size(), 2u);
  EXPECT_EQ(minibatch_ranges(22, 10).size(), 3u);
  EXPECT_EQ(minibatch_ranges(22, 10).back().second, 22u);
  EXPECT_EQ(minibatch_ranges(1, 10).size(), 1u);
  EXPECT_EQ(minibatch_ranges(5, 1).size(), 5u);
}

TEST(LocalRound, SeparableShardIsLearnedPerfectly) {
  const auto shard = separable_shard();
  LocalConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 10;
  ParamVector p(kSpec.param_count());
  double prev = loss(kSpec, p, shard.train);
  int increases = 0;
  for (std::size_t epoch = 0; epoch < 200; ++epoch) {
    p = local_round(kSpec, shard, p, cfg, epoch).updated_params;
    const double now = loss(kSpec, p, shard.train);
    if (now > prev) ++increases;
    prev = now;
  }
  EXPECT_EQ(increases, 0);
  EXPECT_EQ(accuracy(kSpec, p, shard.train), 1.0);
}

TEST(LocalRound, DivergenceReportsRoundAndClient) {
  auto shard = make_shard(5, 20, 9);
  for (auto& x : shard.train.features) x *= 1e200;
  LocalConfig cfg;
  cfg.learning_rate = 1e200;
  try {
    local_round(kSpec, shard, init_params(kSpec, 1), cfg, 12);
    FAIL() << "expected divergence";
  } catch (const DivergedClientError& e) {
    EXPECT_EQ(e.round(), 12u);
    EXPECT_EQ(e.client_id(), 5u);
  }
}

TEST(LocalRound, Contracts) {
  auto shard = make_shard(0, 20, 1);
  LocalConfig cfg;
  EXPECT_THROW(local_round(kSpec, shard, ParamVector(3), cfg, 0), ContractError);
  shard.train = Batch{3, {}, {}};
  EXPECT_THROW(local_round(kSpec, shard, init_params(kSpec, 1), cfg, 0), ContractError);
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
