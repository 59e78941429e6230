#pragma once

// Server-side agent that picks the aggregation exponent q each round.
//
// State: per-client losses sorted descending (zero-padded / truncated to m_max),
// then mean loss, loss std, previous q and round progress t / T; optionally the
// current global validation accuracy as one more feature.
// Policy: tanh MLP (two hidden layers) producing logits over a fixed q grid.
// Learning: REINFORCE with discounted reward-to-go and a per-step exponential
// moving-average baseline, one update per episode (one full federated run).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "dqfl/error.hpp"
#include "dqfl/io.hpp"
#include "dqfl/local_trainer.hpp"
#include "dqfl/metrics.hpp"
#include "dqfl/rng.hpp"

namespace dqfl {

/// Strictly increasing, finite, non-negative q values containing 0 and 1.
struct QGrid {
  std::vector<double> values;

  static QGrid standard() { return {{0.0, 0.1, 0.5, 1.0, 2.0, 5.0}}; }

  /// Checks everything except the 0/1 membership, which only the agent's
  /// default grid needs; degenerate grids such as {0} are legal for experiments.
  void validate_shape() const {
    if (values.empty()) throw ConfigError("q grid must not be empty");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i]) || values[i] < 0.0) throw ConfigError("q grid values must be finite and >= 0");
      if (i > 0 && !(values[i] > values[i - 1])) throw ConfigError("q grid must be strictly increasing");
    }
  }

  void validate() const {
    validate_shape();
    const bool has0 = std::find(values.begin(), values.end(), 0.0) != values.end();
    const bool has1 = std::find(values.begin(), values.end(), 1.0) != values.end();
    if (!has0 || !has1) throw ConfigError("q grid must contain 0 and 1");
  }

  std::size_t size() const noexcept { return values.size(); }
};

inline constexpr std::size_t kStateExtraFeatures = 4;

struct PolicyState {
  std::vector<double> features;
};

/// Builds the fixed-length state. Reports may arrive in any order.
inline PolicyState build_state(std::span<const double> losses, double prev_q, std::size_t t, std::size_t total_rounds,
                               std::size_t m_max) {
  if (losses.empty()) throw ContractError("build_state needs at least one loss");
  if (m_max < 1) throw ContractError("m_max must be >= 1");
  std::vector<double> sorted(losses.begin(), losses.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  PolicyState s;
  s.features.assign(m_max + kStateExtraFeatures, 0.0);
  std::copy_n(sorted.begin(), std::min(m_max, sorted.size()), s.features.begin());
  s.features[m_max] = mean(sorted);
  s.features[m_max + 1] = std::sqrt(population_variance(sorted));
  s.features[m_max + 2] = prev_q;
  s.features[m_max + 3] = total_rounds > 0 ? static_cast<double>(t) / static_cast<double>(total_rounds) : 0.0;
  for (double f : s.features)
    if (!std::isfinite(f)) throw ContractError("non-finite state feature");
  return s;
}

inline PolicyState build_state(std::span<const ClientReport> reports, double prev_q, std::size_t t,
                               std::size_t total_rounds, std::size_t m_max) {
  std::vector<double> losses;
  losses.reserve(reports.size());
  for (const auto& r : reports) losses.push_back(r.reported_loss);
  return build_state(losses, prev_q, t, total_rounds, m_max);
}

/// r = a * exp(-var(losses)) with population variance.
inline double compute_reward(double accuracy, std::span<const double> losses) {
  if (losses.empty()) throw ContractError("compute_reward needs at least one loss");
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw ContractError("accuracy must lie in [0, 1]");
  return accuracy * std::exp(-population_variance(losses));
}

/// Feed-forward policy: input -> hidden -> hidden -> |grid| logits, tanh activations.
/// Parameters: W1[h x in], b1[h], W2[h x h], b2[h], W3[out x h], b3[out].
class PolicyNet {
 public:
  PolicyNet() = default;

  PolicyNet(std::size_t input_dim, std::size_t hidden, std::size_t outputs, std::uint64_t seed)
      : input_(input_dim), hidden_(hidden), outputs_(outputs), params_(param_count(input_dim, hidden, outputs), 0.0) {
    if (input_dim < 1 || hidden < 1 || outputs < 1) throw ConfigError("policy network dimensions must be >= 1");
    Rng rng(seed);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (std::size_t i = 0; i < hidden * input_dim; ++i) params_[i] = s1 * rng.normal();
    const std::size_t w2 = hidden * input_dim + hidden;
    for (std::size_t i = 0; i < hidden * hidden; ++i) params_[w2 + i] = s2 * rng.normal();
    // Output layer starts at zero: the initial policy is uniform over the grid.
  }

  static std::size_t param_count(std::size_t in, std::size_t h, std::size_t out) {
    return h * in + h + h * h + h + out * h + out;
  }

  std::size_t input_dim() const noexcept { return input_; }
  std::size_t hidden_dim() const noexcept { return hidden_; }
  std::size_t output_dim() const noexcept { return outputs_; }
  const std::vector<double>& params() const noexcept { return params_; }
  std::vector<double>& params() noexcept { return params_; }

  void set_params(std::vector<double> p) {
    if (p.size() != params_.size()) throw ContractError("policy parameter length mismatch");
    params_ = std::move(p);
  }

  struct Activations {
    std::vector<double> h1, h2, logits;
  };

  Activations forward(std::span<const double> x) const {
    if (x.size() != input_) throw ContractError("policy state length mismatch");
    Activations a;
    a.h1.resize(hidden_);
    a.h2.resize(hidden_);
    a.logits.resize(outputs_);
    const double* p = params_.data();
    layer(p, p + hidden_ * input_, x, a.h1);
    for (auto& v : a.h1) v = std::tanh(v);
    p += hidden_ * input_ + hidden_;
    layer(p, p + hidden_ * hidden_, a.h1, a.h2);
    for (auto& v : a.h2) v = std::tanh(v);
    p += hidden_ * hidden_ + hidden_;
    layer(p, p + outputs_ * hidden_, a.h2, a.logits);
    return a;
  }

  std::vector<double> logits(std::span<const double> x) const { return forward(x).logits; }

  /// Softmax probabilities over the grid.
  std::vector<double> probabilities(std::span<const double> x) const {
    auto z = logits(x);
    return softmax(z);
  }

  static std::vector<double> softmax(std::vector<double> z) {
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (auto& v : z) v /= sum;
    return z;
  }

  /// Gradient of log pi(action | x) with respect to all parameters.
  std::vector<double> log_prob_grad(std::span<const double> x, std::size_t action) const {
    const auto a = forward(x);
    const auto probs = softmax(a.logits);
    std::vector<double> g(params_.size(), 0.0);
    std::vector<double> dz(outputs_);
    for (std::size_t k = 0; k < outputs_; ++k) dz[k] = (k == action ? 1.0 : 0.0) - probs[k];

    const std::size_t w1 = 0, b1 = hidden_ * input_, w2 = b1 + hidden_, b2 = w2 + hidden_ * hidden_,
                      w3 = b2 + hidden_, b3 = w3 + outputs_ * hidden_;
    std::vector<double> dh2(hidden_, 0.0), dh1(hidden_, 0.0);
    for (std::size_t k = 0; k < outputs_; ++k) {
      for (std::size_t j = 0; j < hidden_; ++j) {
        g[w3 + k * hidden_ + j] = dz[k] * a.h2[j];
        dh2[j] += dz[k] * params_[w3 + k * hidden_ + j];
      }
      g[b3 + k] = dz[k];
    }
    for (std::size_t j = 0; j < hidden_; ++j) {
      const double da = dh2[j] * (1.0 - a.h2[j] * a.h2[j]);
      for (std::size_t i = 0; i < hidden_; ++i) {
        g[w2 + j * hidden_ + i] = da * a.h1[i];
        dh1[i] += da * params_[w2 + j * hidden_ + i];
      }
      g[b2 + j] = da;
    }
    for (std::size_t j = 0; j < hidden_; ++j) {
      const double da = dh1[j] * (1.0 - a.h1[j] * a.h1[j]);
      for (std::size_t i = 0; i < input_; ++i) g[w1 + j * input_ + i] = da * x[i];
      g[b1 + j] = da;
    }
    return g;
  }

  friend bool operator==(const PolicyNet&, const PolicyNet&) = default;

 private:
  static void layer(const double* w, const double* b, std::span<const double> x, std::vector<double>& out) {
    const std::size_t in = x.size();
    for (std::size_t r = 0; r < out.size(); ++r) {
      double acc = b[r];
      for (std::size_t j = 0; j < in; ++j) acc += w[r * in + j] * x[j];
      out[r] = acc;
    }
  }

  std::size_t input_ = 0, hidden_ = 0, outputs_ = 0;
  std::vector<double> params_;
};

struct Action {
  double q = 0.0;
  std::size_t index = 0;
  double log_prob = 0.0;
};

/// Samples from the softmax policy (explore) or takes its argmax, lowest index on ties.
inline Action select_action(const PolicyNet& net, const QGrid& grid, const PolicyState& state, Rng& rng,
                            bool explore) {
  if (grid.size() != net.output_dim()) throw ContractError("q grid size does not match policy outputs");
  auto z = net.logits(state.features);
  for (double v : z)
    if (!std::isfinite(v)) throw DivergedPolicyError("policy produced non-finite logits");
  const auto probs = PolicyNet::softmax(z);
  std::size_t idx = 0;
  if (explore) {
    const double u = rng.uniform();
    double cum = 0.0;
    idx = probs.size() - 1;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      cum += probs[k];
      if (u < cum) {
        idx = k;
        break;
      }
    }
  } else {
    idx = detail::argmax_lowest(z);
  }
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  return {grid.values[idx], idx, z[idx] - mx - std::log(sum)};
}

struct TrajectoryStep {
  PolicyState state;
  std::size_t action_index = 0;
  double log_prob = 0.0;
  double reward = 0.0;
};

using Trajectory = std::vector<TrajectoryStep>;

/// Per-step exponential moving average of reward-to-go across episodes. A step
/// seen for the first time is seeded with its own return, so its first
/// advantage is zero rather than the full return.
struct Baseline {
  double decay = 0.9;
  std::vector<double> values;

  bool has(std::size_t t) const { return t < values.size(); }

  /// Advantage G_t - b_t; zero for steps the baseline has not seen yet.
  double advantage(std::size_t t, double ret) const { return has(t) ? ret - values[t] : 0.0; }

  void update(std::span<const double> returns) {
    for (std::size_t t = 0; t < returns.size(); ++t) {
      if (has(t))
        values[t] = decay * values[t] + (1.0 - decay) * returns[t];
      else
        values.push_back(returns[t]);
    }
  }

  friend bool operator==(const Baseline&, const Baseline&) = default;
};

/// Discounted reward-to-go G_t = sum_{t' >= t} gamma^(t'-t) r_t'.
inline std::vector<double> rewards_to_go(const Trajectory& traj, double gamma) {
  std::vector<double> g(traj.size());
  double acc = 0.0;
  for (std::size_t i = traj.size(); i-- > 0;) {
    acc = traj[i].reward + gamma * acc;
    g[i] = acc;
  }
  return g;
}

/// One REINFORCE ascent step along sum_t grad log pi(a_t|s_t) (G_t - b_t); then
/// folds this episode's returns into the baseline.
inline PolicyNet policy_update(PolicyNet net, const Trajectory& traj, double learning_rate, double gamma,
                               Baseline& baseline) {
  if (traj.empty()) throw ContractError("policy_update needs a non-empty trajectory");
  const auto returns = rewards_to_go(traj, gamma);
  std::vector<double> grad(net.params().size(), 0.0);
  for (std::size_t t = 0; t < traj.size(); ++t) {
    if (!std::isfinite(traj[t].reward)) throw DivergedPolicyError("non-finite reward in trajectory");
    const double advantage = baseline.advantage(t, returns[t]);
    if (advantage == 0.0) continue;
    const auto g = net.log_prob_grad(traj[t].state.features, traj[t].action_index);
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += advantage * g[i];
  }
  for (double g : grad)
    if (!std::isfinite(g)) throw DivergedPolicyError("non-finite policy gradient");
  auto& p = net.params();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] += learning_rate * grad[i];
  baseline.update(returns);
  return net;
}

struct AgentConfig {
  QGrid grid = QGrid::standard();
  std::size_t hidden = 32;
  double learning_rate = 1e-2;
  double gamma = 0.99;
  double baseline_decay = 0.9;
  std::uint64_t seed = 7;
  /// 0 means "use the run's participants per round".
  std::size_t m_max = 0;
  bool accuracy_in_state = false;
  /// Credit r = a^t exp(-var F(w^t)) to the action taken at round t itself
  /// instead of to the action at t-1 that produced w^t.
  bool same_step_reward = false;

  void validate() const {
    grid.validate_shape();
    if (hidden < 1) throw ConfigError("agent hidden must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("agent learning_rate must be >= 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("agent gamma must be in [0, 1]");
    if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) throw ConfigError("baseline_decay must be in [0, 1)");
  }

  std::size_t state_dim(std::size_t m) const {
    return (m_max == 0 ? m : m_max) + kStateExtraFeatures + (accuracy_in_state ? 1 : 0);
  }
};

/// Stateful agent owned by the orchestrator. Collects one trajectory per
/// episode and applies a policy update when the episode is finished.
class Agent {
 public:
  Agent(const AgentConfig& cfg, std::size_t state_dim)
      : cfg_(cfg),
        net_(state_dim, cfg.hidden, cfg.grid.size(), derive_seed(cfg.seed, {0x9e7})),
        rng_(derive_seed(cfg.seed, {0xac7})) {
    cfg_.validate();
    baseline_.decay = cfg.baseline_decay;
  }

  const AgentConfig& config() const noexcept { return cfg_; }
  const PolicyNet& net() const noexcept { return net_; }
  const Baseline& baseline() const noexcept { return baseline_; }
  const Trajectory& trajectory() const noexcept { return trajectory_; }
  std::size_t episodes() const noexcept { return episodes_; }
  std::size_t state_dim() const noexcept { return net_.input_dim(); }

  void begin_episode() { trajectory_.clear(); }

  Action act(const PolicyState& state, bool explore) {
    auto a = select_action(net_, cfg_.grid, state, rng_, explore);
    trajectory_.push_back({state, a.index, a.log_prob, 0.0});
    return a;
  }

  /// Sets the reward of step `step` in the current trajectory.
  void reward(std::size_t step, double r) {
    if (step >= trajectory_.size()) throw ContractError("reward for an action that was never taken");
    trajectory_[step].reward = r;
  }

  /// Applies the REINFORCE update and returns the undiscounted episode return.
  double finish_episode() {
    double ret = 0.0;
    for (const auto& s : trajectory_) ret += s.reward;
    net_ = policy_update(std::move(net_), trajectory_, cfg_.learning_rate, cfg_.gamma, baseline_);
    ++episodes_;
    return ret;
  }

  void save_checkpoint(const std::filesystem::path& path) const {
    std::ostringstream out;
    out << "dqfl-checkpoint 1\n";
    out << "episodes " << episodes_ << '\n';
    out << "input_dim " << net_.input_dim() << '\n';
    out << "hidden " << net_.hidden_dim() << '\n';
    out << "grid " << cfg_.grid.size();
    for (double q : cfg_.grid.values) out << ' ' << format_double(q);
    out << "\nbaseline_decay " << format_double(baseline_.decay) << '\n';
    out << "baseline " << baseline_.values.size();
    for (double b : baseline_.values) out << ' ' << format_double(b);
    out << "\nrng " << rng_.state() << '\n';
    out << format_vector(net_.params());
    write_text_file(path, out.str());
  }

  void load_checkpoint(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line, key;
    auto next = [&](const char* expected) -> std::istringstream {
      if (!std::getline(in, line)) throw ConfigError("checkpoint truncated before '" + std::string(expected) + "'");
      std::istringstream ls(line);
      ls >> key;
      if (key != expected) throw ConfigError("checkpoint: expected '" + std::string(expected) + "', got '" + key + "'");
      return ls;
    };
    if (!std::getline(in, line) || line != "dqfl-checkpoint 1") throw ConfigError("not a dqfl checkpoint");
    std::size_t episodes = 0, input = 0, hidden = 0, n = 0;
    next("episodes") >> episodes;
    next("input_dim") >> input;
    next("hidden") >> hidden;
    if (input != net_.input_dim() || hidden != net_.hidden_dim())
      throw ConfigError("checkpoint network shape does not match the configured agent");
    {
      auto ls = next("grid");
      ls >> n;
      std::vector<double> grid(n);
      for (auto& q : grid) {
        std::string tok;
        ls >> tok;
        q = parse_double(tok);
      }
      if (grid != cfg_.grid.values) throw ConfigError("checkpoint q grid does not match the configured agent");
    }
    Baseline baseline;
    {
      std::string tok;
      next("baseline_decay") >> tok;
      baseline.decay = parse_double(tok);
      auto ls = next("baseline");
      ls >> n;
      baseline.values.resize(n);
      for (auto& b : baseline.values) {
        ls >> tok;
        b = parse_double(tok);
      }
    }
    {
      auto ls = next("rng");
      std::string rest;
      std::getline(ls, rest);
      rng_.restore(rest);
    }
    net_.set_params(parse_vector(in));
    baseline_ = std::move(baseline);
    episodes_ = episodes;
  }

 private:
  AgentConfig cfg_;
  PolicyNet net_;
  Baseline baseline_;
  Rng rng_;
  Trajectory trajectory_;
  std::size_t episodes_ = 0;
};

}  // namespace dqfl
