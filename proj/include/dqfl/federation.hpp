#pragma once

// Round orchestration: client selection and broadcast, local work on the
// selected clients, agent step and aggregation, plus message accounting.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dqfl/agent.hpp"
#include "dqfl/aggregation.hpp"
#include "dqfl/data_synth.hpp"
#include "dqfl/error.hpp"
#include "dqfl/local_trainer.hpp"
#include "dqfl/metrics.hpp"
#include "dqfl/model.hpp"
#include "dqfl/rng.hpp"

namespace dqfl {

/// Uniform sample of m distinct ids out of K, sorted ascending; a pure function of (seed, t).
inline std::vector<std::size_t> select_clients(std::size_t num_clients, std::size_t m, std::size_t round,
                                               std::uint64_t seed) {
  if (m < 1 || m > num_clients) throw ContractError("need 1 <= m <= K for client selection");
  std::vector<std::size_t> ids(num_clients);
  for (std::size_t i = 0; i < num_clients; ++i) ids[i] = i;
  Rng rng(derive_seed(seed, {0x5e1ec7, round}));
  // Partial Fisher-Yates: the first m slots become the sample.
  for (std::size_t i = 0; i < m; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(num_clients - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// m = max(ceil(C * K), 1), capped at K.
inline std::size_t participants_from_fraction(double fraction, std::size_t num_clients) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("participation fraction must be in (0, 1]");
  const auto m = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(num_clients) - 1e-12));
  return std::clamp<std::size_t>(m, 1, num_clients);
}

/// The orchestrator's only handle on client data. It can ask a client to do
/// its round work or to evaluate a model locally; it never sees samples.
class ClientPool {
 public:
  ClientPool(ModelSpec spec, std::vector<ClientShard> shards) : spec_(std::move(spec)), shards_(std::move(shards)) {
    for (std::size_t i = 0; i < shards_.size(); ++i)
      if (shards_[i].client_id != i) throw ContractError("client ids must be 0..K-1 in order");
  }

  std::size_t size() const noexcept { return shards_.size(); }
  const ModelSpec& model() const noexcept { return spec_; }
  std::size_t sample_count(std::size_t id) const { return shards_.at(id).sample_count; }
  double share(std::size_t id) const { return shards_.at(id).share; }

  ClientReport local_round(std::size_t id, const ParamVector& global, const LocalConfig& cfg, std::size_t round,
                           LossUpload upload) const {
    return dqfl::local_round(spec_, shards_.at(id), global, cfg, round, upload);
  }

  /// Loss the client would report for `params` in round `round`, without training.
  double probe_loss(std::size_t id, const ParamVector& params, const LocalConfig& cfg, std::size_t round) const {
    const auto& train = shards_.at(id).train;
    if (cfg.full_train_loss) return loss(spec_, params, train);
    return loss(spec_, params,
                train.subset(loss_batch_indices(train.size(), cfg.batch_size, cfg.shuffle_seed_base, id, round)));
  }

  /// Accuracy on the client's local test split.
  double test_accuracy(std::size_t id, const ParamVector& params) const {
    return accuracy(spec_, params, shards_.at(id).test);
  }

 private:
  ModelSpec spec_;
  std::vector<ClientShard> shards_;
};

struct RunConfig {
  std::size_t rounds = 100;      // T
  std::size_t participants = 10; // m
  ModelSpec model;
  StrategyConfig strategy;
  LocalConfig local;
  AgentConfig agent;
  std::uint64_t selection_seed = 11;
  std::uint64_t init_seed = 13;
  /// Per-client test accuracies are measured every eval_every rounds and after the last round.
  std::size_t eval_every = 10;
  bool parallel_clients = false;
  /// Sample actions from the policy (training) or take its argmax.
  bool explore = true;

  void validate(std::size_t num_clients) const {
    if (rounds < 1) throw ConfigError("rounds must be >= 1");
    if (participants < 1 || participants > num_clients) throw ConfigError("participants must be in [1, K]");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    model.validate();
    strategy.validate();
    local.validate();
    agent.validate();
  }
};

struct MessageLedger {
  std::uint64_t bytes_down = 0;
  std::uint64_t bytes_up = 0;
  std::uint64_t messages_down = 0;
  std::uint64_t messages_up = 0;

  friend bool operator==(const MessageLedger&, const MessageLedger&) = default;
};

struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::size_t> selected;
  std::vector<double> losses;
  double q = 0.0;
  std::optional<std::size_t> action_index;
  WeightVector weights;
  /// sum_k w_k F_k(w^t): the fair objective evaluated with this round's weights.
  double weighted_loss = 0.0;
  /// Reward credited to this round's q choice.
  double reward = 0.0;
  /// Accuracy of the incoming global model w^t on the server validation pool.
  double global_accuracy = 0.0;
  /// Test accuracy of the aggregated model on every client, on evaluation rounds.
  std::optional<std::vector<double>> client_accuracies;
  std::uint64_t bytes_down = 0;
  std::uint64_t bytes_up = 0;
  std::uint64_t messages = 0;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct RunSummary {
  StrategyConfig strategy;
  ParamVector final_params;
  std::vector<RoundRecord> rounds;
  std::vector<double> final_client_accuracies;
  double final_global_accuracy = 0.0;
  MessageLedger ledger;

  friend bool operator==(const RunSummary&, const RunSummary&) = default;
};

/// One federated training run over a fixed client pool.
class Simulation {
 public:
  Simulation(const ClientPool& pool, Batch server_validation, RunConfig cfg, Agent* agent = nullptr)
      : pool_(pool), server_validation_(std::move(server_validation)), cfg_(std::move(cfg)), agent_(agent) {
    cfg_.validate(pool_.size());
    if (!(cfg_.model == pool_.model())) throw ContractError("run model spec differs from the client pool's");
    if (server_validation_.size() == 0) throw ContractError("server validation set is empty");
    if (cfg_.strategy.kind == StrategyKind::kDynamicQ) {
      if (agent_ == nullptr) throw ContractError("dynamic_q needs an agent");
      if (agent_->state_dim() != cfg_.agent.state_dim(cfg_.participants))
        throw ContractError("agent state dimension does not match the run");
    }
    if (has_agent()) agent_->begin_episode();
    global_ = init_params(cfg_.model, cfg_.init_seed);
    summary_.strategy = cfg_.strategy;
    summary_.rounds.reserve(cfg_.rounds);
  }

  const ParamVector& global_params() const noexcept { return global_; }
  const MessageLedger& ledger() const noexcept { return summary_.ledger; }
  std::size_t next_round() const noexcept { return next_round_; }

  /// Executes round t = next_round() and returns its record.
  const RoundRecord& run_round() {
    const std::size_t t = next_round_;
    if (t >= cfg_.rounds) throw ContractError("all rounds already executed");
    const bool uploads_loss = cfg_.strategy.kind != StrategyKind::kFedAvg;
    const std::size_t p_bytes = param_bytes(cfg_.model.param_count());

    RoundRecord rec;
    rec.round = t;

    // Step 1: select and broadcast w^t.
    rec.selected = select_clients(pool_.size(), cfg_.participants, t, cfg_.selection_seed);
    rec.bytes_down = rec.selected.size() * p_bytes;

    // Step 2: local work; merged in ascending client id order.
    auto reports = run_clients(rec.selected, t, uploads_loss ? LossUpload::kWithLoss : LossUpload::kParamsOnly);
    for (const auto& r : reports) {
      rec.losses.push_back(r.reported_loss);
      rec.bytes_up += r.upload_bytes;
    }
    rec.messages = 2 * rec.selected.size();

    rec.global_accuracy = accuracy(cfg_.model, global_, server_validation_);
    const double reward_now = compute_reward(rec.global_accuracy, rec.losses);
    // The reward observed at t belongs to the choice made at t-1, which produced w^t.
    if (!cfg_.agent.same_step_reward && t > 0) credit(t - 1, reward_now);

    // Step 3: choose q, weight and aggregate.
    switch (cfg_.strategy.kind) {
      case StrategyKind::kFedAvg:
        rec.q = 0.0;
        break;
      case StrategyKind::kStaticQ:
        rec.q = cfg_.strategy.q;
        break;
      case StrategyKind::kDynamicQ: {
        auto state = build_state(rec.losses, prev_q_, t, cfg_.rounds, state_slots());
        if (cfg_.agent.accuracy_in_state) state.features.push_back(rec.global_accuracy);
        const auto action = agent_->act(state, cfg_.explore);
        rec.q = action.q;
        rec.action_index = action.index;
        break;
      }
    }
    std::vector<double> shares;
    shares.reserve(reports.size());
    for (const auto& r : reports) shares.push_back(pool_.share(r.client_id));
    rec.weights = cfg_.strategy.kind == StrategyKind::kFedAvg
                      ? fedavg_weights(reports, shares)
                      : dqffl_weights(reports, shares, rec.q, cfg_.strategy.loss_floor);
    rec.weighted_loss = weighted_loss(reports, rec.weights);
    global_ = aggregate(reports, rec.weights);
    if (!global_.all_finite()) throw DivergenceError("aggregated model is non-finite in round " + std::to_string(t));

    summary_.ledger.bytes_down += rec.bytes_down;
    summary_.ledger.bytes_up += rec.bytes_up;
    summary_.ledger.messages_down += rec.selected.size();
    summary_.ledger.messages_up += reports.size();

    if (cfg_.agent.same_step_reward) rec.reward = reward_now;
    if (cfg_.agent.same_step_reward && has_agent()) agent_->reward(agent_->trajectory().size() - 1, reward_now);

    const bool last = t + 1 == cfg_.rounds;
    if ((t + 1) % cfg_.eval_every == 0 || last) rec.client_accuracies = evaluate_clients(global_);

    prev_q_ = rec.q;
    summary_.rounds.push_back(std::move(rec));
    ++next_round_;
    if (last) finish();
    return summary_.rounds.back();
  }

  /// Runs every remaining round and returns the summary.
  RunSummary run() {
    while (next_round_ < cfg_.rounds) run_round();
    return summary_;
  }

 private:
  bool has_agent() const { return cfg_.strategy.kind == StrategyKind::kDynamicQ; }

  std::size_t state_slots() const { return cfg_.agent.m_max == 0 ? cfg_.participants : cfg_.agent.m_max; }

  void credit(std::size_t round, double r) {
    summary_.rounds[round].reward = r;
    if (has_agent()) agent_->reward(round, r);
  }

  std::vector<ClientReport> run_clients(const std::vector<std::size_t>& ids, std::size_t t, LossUpload upload) const {
    std::vector<ClientReport> reports(ids.size());
    if (!cfg_.parallel_clients || ids.size() == 1) {
      for (std::size_t i = 0; i < ids.size(); ++i) reports[i] = pool_.local_round(ids[i], global_, cfg_.local, t, upload);
      return reports;
    }
    std::vector<std::future<ClientReport>> futures;
    futures.reserve(ids.size());
    for (auto id : ids)
      futures.push_back(std::async(std::launch::async, [this, id, t, upload] {
        return pool_.local_round(id, global_, cfg_.local, t, upload);
      }));
    // get() rethrows the first failure in id order.
    for (std::size_t i = 0; i < futures.size(); ++i) reports[i] = futures[i].get();
    return reports;
  }

  std::vector<double> evaluate_clients(const ParamVector& params) const {
    std::vector<double> acc(pool_.size());
    for (std::size_t k = 0; k < pool_.size(); ++k) acc[k] = pool_.test_accuracy(k, params);
    return acc;
  }

  // Terminal bookkeeping: the last q choice is rewarded with the final model's
  // validation accuracy and the spread of the losses its clients would report
  // in a further round. This probe is evaluation, not protocol traffic.
  void finish() {
    auto& last = summary_.rounds.back();
    summary_.final_global_accuracy = accuracy(cfg_.model, global_, server_validation_);
    if (!cfg_.agent.same_step_reward) {
      std::vector<double> losses;
      for (auto id : last.selected) losses.push_back(pool_.probe_loss(id, global_, cfg_.local, cfg_.rounds));
      credit(last.round, compute_reward(summary_.final_global_accuracy, losses));
    }
    summary_.final_params = global_;
    summary_.final_client_accuracies = *last.client_accuracies;
  }

  const ClientPool& pool_;
  Batch server_validation_;
  RunConfig cfg_;
  Agent* agent_;
  ParamVector global_;
  RunSummary summary_;
  double prev_q_ = 0.0;
  std::size_t next_round_ = 0;
};

}  // namespace dqfl
