#pragma once

// One client's share of a round: report the loss of the received global model
// on one drawn batch, then run E epochs of plain mini-batch SGD.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "dqfl/data_synth.hpp"
#include "dqfl/error.hpp"
#include "dqfl/model.hpp"
#include "dqfl/rng.hpp"

namespace dqfl {

inline constexpr std::size_t kBytesPerScalar = 8;

struct LocalConfig {
  double learning_rate = 0.1;
  std::size_t batch_size = 10;
  std::size_t local_epochs = 1;
  std::uint64_t shuffle_seed_base = 0;
  /// Report the loss on the whole training split instead of one batch.
  bool full_train_loss = false;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("learning_rate must be finite and >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
  }
};

/// Whether the client's upload carries its loss scalar next to the parameters.
enum class LossUpload { kWithLoss, kParamsOnly };

struct ClientReport {
  std::size_t client_id = 0;
  ParamVector updated_params;
  double reported_loss = 0.0;
  std::size_t samples_used = 0;
  std::size_t upload_bytes = 0;

  friend bool operator==(const ClientReport&, const ClientReport&) = default;
};

/// Serialized parameter payload, 8 bytes per parameter.
inline std::size_t param_bytes(std::size_t param_count) { return param_count * kBytesPerScalar; }

/// Indices of the batch whose loss the client reports in round t, drawn without replacement.
inline std::vector<std::size_t> loss_batch_indices(std::size_t train_size, std::size_t batch_size,
                                                   std::uint64_t seed_base, std::size_t client_id,
                                                   std::size_t round) {
  std::vector<std::size_t> idx(train_size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(seed_base, {0x1055, client_id, round}));
  rng.shuffle(idx);
  idx.resize(std::min(batch_size, train_size));
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Mini-batch boundaries for one epoch. A trailing single-sample batch is
/// dropped when B > 1 and it is not the only batch.
inline std::vector<std::pair<std::size_t, std::size_t>> minibatch_ranges(std::size_t n, std::size_t batch_size) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t begin = 0; begin < n; begin += batch_size) ranges.emplace_back(begin, std::min(n, begin + batch_size));
  if (ranges.size() > 1 && batch_size > 1 && ranges.back().second - ranges.back().first == 1) ranges.pop_back();
  return ranges;
}

inline ClientReport local_round(const ModelSpec& spec, const ClientShard& shard, const ParamVector& global_params,
                                const LocalConfig& cfg, std::size_t round,
                                LossUpload upload = LossUpload::kWithLoss) {
  const Batch& train = shard.train;
  if (train.size() == 0) throw ContractError("client " + std::to_string(shard.client_id) + " has no training data");
  if (global_params.size() != spec.param_count()) throw ContractError("global parameters do not match model");

  ClientReport report;
  report.client_id = shard.client_id;

  // Step 2 ordering: loss of the untouched global model first.
  if (cfg.full_train_loss) {
    report.reported_loss = loss(spec, global_params, train);
  } else {
    const auto idx = loss_batch_indices(train.size(), cfg.batch_size, cfg.shuffle_seed_base, shard.client_id, round);
    report.reported_loss = loss(spec, global_params, train.subset(idx));
  }
  if (!std::isfinite(report.reported_loss)) throw DivergedClientError(round, shard.client_id, "non-finite reported loss");

  ParamVector params = global_params;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto ranges = minibatch_ranges(train.size(), cfg.batch_size);
  std::size_t used = 0;
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    Rng rng(derive_seed(cfg.shuffle_seed_base, {0x5fd, shard.client_id, round, epoch}));
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (const auto& [begin, end] : ranges) {
      const auto mb = train.subset(std::span<const std::size_t>(order).subspan(begin, end - begin));
      auto [value, grad] = loss_grad(spec, params, mb);
      if (!std::isfinite(value) || !grad.all_finite())
        throw DivergedClientError(round, shard.client_id, "non-finite loss or gradient during local training");
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.learning_rate * grad[i];
      used += end - begin;
    }
  }
  if (!params.all_finite()) throw DivergedClientError(round, shard.client_id, "non-finite parameters after training");

  report.updated_params = std::move(params);
  report.samples_used = used;
  report.upload_bytes = param_bytes(spec.param_count()) + (upload == LossUpload::kWithLoss ? kBytesPerScalar : 0);
  return report;
}

}  // namespace dqfl
