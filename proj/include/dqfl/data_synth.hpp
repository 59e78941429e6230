#pragma once

// Non-IID synthetic federations. Each client k draws its own linear labeling
// model around a shared base model (spread alpha), plus a per-class bias offset
// (spread alpha), and its own feature mean (spread beta). Labels are the argmax
// of the client's logits with optional Gaussian logit noise. Sample counts are
// log-uniform in [samples_min, samples_max], split 80/10/10 into train, test and
// validation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "dqfl/error.hpp"
#include "dqfl/model.hpp"
#include "dqfl/rng.hpp"

namespace dqfl {

struct SynthConfig {
  std::size_t num_clients = 30;
  std::size_t input_dim = 20;
  std::size_t num_classes = 5;
  double alpha = 1.0;
  double beta = 1.0;
  std::size_t samples_min = 50;
  std::size_t samples_max = 1000;
  /// 0 disables; towards 1 each client concentrates on fewer classes.
  double label_skew = 0.0;
  double logit_noise = 0.1;
  /// Share of each client's validation split copied into the server's pool.
  double server_validation_fraction = 0.1;
  std::uint64_t seed = 1;

  void validate() const {
    if (num_clients < 2) throw ConfigError("num_clients must be >= 2");
    if (input_dim < 1) throw ConfigError("input_dim must be >= 1");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("alpha and beta must be >= 0");
    if (samples_min < 1 || samples_min > samples_max) throw ConfigError("need 1 <= samples_min <= samples_max");
    if (samples_min < 10) throw ConfigError("samples_min must be >= 10 for an 80/10/10 split");
    if (!(label_skew >= 0.0 && label_skew <= 1.0)) throw ConfigError("label_skew must be in [0, 1]");
    if (!(logit_noise >= 0.0)) throw ConfigError("logit_noise must be >= 0");
    if (!(server_validation_fraction > 0.0 && server_validation_fraction <= 1.0))
      throw ConfigError("server_validation_fraction must be in (0, 1]");
  }
};

struct ClientShard {
  std::size_t client_id = 0;
  Batch train;
  Batch test;
  Batch validation;
  std::size_t sample_count = 0;  // s_k
  double share = 0.0;            // p_k

  friend bool operator==(const ClientShard&, const ClientShard&) = default;
};

struct Federation {
  std::vector<ClientShard> clients;
  Batch server_validation;

  friend bool operator==(const Federation&, const Federation&) = default;
};

struct SplitSizes {
  std::size_t train, test, validation;
};

/// 80/10/10 split, rounding the two small splits and giving each at least one sample.
inline SplitSizes split_sizes(std::size_t total) {
  if (total < 10) throw ConfigError("client with " + std::to_string(total) + " samples cannot be split 80/10/10");
  const auto tenth = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(total))));
  return {total - 2 * tenth, tenth, tenth};
}

/// Recomputes p_k = s_k / sum s_i for every client.
inline void assign_shares(std::vector<ClientShard>& clients) {
  std::size_t total = 0;
  for (const auto& c : clients) total += c.sample_count;
  for (auto& c : clients) c.share = static_cast<double>(c.sample_count) / static_cast<double>(total);
}

inline Federation generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.input_dim, c = cfg.num_classes, n_clients = cfg.num_clients;
  Rng rng(derive_seed(cfg.seed, {0x5e7}));

  std::vector<double> base_w(c * d), base_b(c);
  for (auto& w : base_w) w = rng.normal();
  for (auto& b : base_b) b = rng.normal();

  std::vector<double> feature_scale(d);
  for (std::size_t j = 0; j < d; ++j) feature_scale[j] = std::pow(static_cast<double>(j + 1), -0.6);  // var j^-1.2

  Federation fed;
  fed.server_validation.dim = d;
  fed.clients.reserve(n_clients);

  const double log_lo = std::log(static_cast<double>(cfg.samples_min));
  const double log_hi = std::log(static_cast<double>(cfg.samples_max));

  for (std::size_t k = 0; k < n_clients; ++k) {
    Rng crng(derive_seed(cfg.seed, {0xc11e47, k}));
    auto count = static_cast<std::size_t>(std::llround(std::exp(crng.uniform(log_lo, log_hi))));
    count = std::clamp(count, cfg.samples_min, cfg.samples_max);

    std::vector<double> w(c * d), b(c), mean(d);
    for (std::size_t i = 0; i < c * d; ++i) w[i] = base_w[i] + cfg.alpha * crng.normal();
    for (std::size_t i = 0; i < c; ++i) b[i] = base_b[i] + cfg.alpha * crng.normal();
    const double feature_center = cfg.beta * crng.normal();
    for (auto& m : mean) m = feature_center + cfg.beta * crng.normal();

    std::vector<double> class_pref;
    double pref_max = 1.0;
    if (cfg.label_skew > 0.0) {
      const double concentration = std::max(1e-3, (1.0 - cfg.label_skew) / cfg.label_skew);
      class_pref = crng.dirichlet(c, concentration);
      pref_max = *std::max_element(class_pref.begin(), class_pref.end());
    }

    Batch all;
    all.dim = d;
    std::vector<double> x(d), logits(c);
    while (all.size() < count) {
      for (std::size_t j = 0; j < d; ++j) x[j] = mean[j] + feature_scale[j] * crng.normal();
      detail::affine(w.data(), b.data(), x, c, logits.data());
      if (cfg.logit_noise > 0.0)
        for (auto& z : logits) z += cfg.logit_noise * crng.normal();
      const auto y = detail::argmax_lowest(logits);
      // Rejection keeps skewed clients near their class preference. Bounded so a
      // vanishing preference cannot stall generation.
      if (!class_pref.empty() && crng.uniform() * pref_max > class_pref[y] && crng.uniform() > 1e-3) continue;
      all.push_back(x, static_cast<int>(y));
    }

    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    crng.shuffle(order);
    const auto sizes = split_sizes(count);
    const std::span<const std::size_t> idx(order);

    ClientShard shard;
    shard.client_id = k;
    shard.sample_count = count;
    shard.train = all.subset(idx.subspan(0, sizes.train));
    shard.test = all.subset(idx.subspan(sizes.train, sizes.test));
    shard.validation = all.subset(idx.subspan(sizes.train + sizes.test, sizes.validation));

    const auto pooled = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::llround(cfg.server_validation_fraction * static_cast<double>(shard.validation.size()))));
    for (std::size_t i = 0; i < std::min(pooled, shard.validation.size()); ++i)
      fed.server_validation.push_back(shard.validation.row(i), shard.validation.labels[i]);

    fed.clients.push_back(std::move(shard));
  }
  assign_shares(fed.clients);
  return fed;
}

struct ShardStats {
  std::size_t clients = 0;
  std::size_t total_samples = 0;
  std::size_t min_samples = 0;
  double median_samples = 0.0;
  std::size_t max_samples = 0;
};

inline ShardStats shard_stats(const std::vector<ClientShard>& shards) {
  if (shards.empty()) throw ContractError("shard_stats needs at least one shard");
  std::vector<std::size_t> counts;
  counts.reserve(shards.size());
  ShardStats s;
  for (const auto& sh : shards) {
    counts.push_back(sh.sample_count);
    s.total_samples += sh.sample_count;
  }
  std::sort(counts.begin(), counts.end());
  s.clients = counts.size();
  s.min_samples = counts.front();
  s.max_samples = counts.back();
  const std::size_t mid = counts.size() / 2;
  s.median_samples = counts.size() % 2 == 1 ? static_cast<double>(counts[mid])
                                            : 0.5 * static_cast<double>(counts[mid - 1] + counts[mid]);
  return s;
}

}  // namespace dqfl
