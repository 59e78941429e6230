#pragma once

// Experiment harness behind the dqfl command-line tool: strict JSON config
// parsing, multi-seed strategy comparisons, agent training and the artifact
// files (rounds.jsonl, summary.json, comparison.csv, histogram.csv,
// q_trace.csv, learning_curve.csv, checkpoint.txt).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqfl/agent.hpp"
#include "dqfl/data_synth.hpp"
#include "dqfl/error.hpp"
#include "dqfl/federation.hpp"
#include "dqfl/io.hpp"
#include "dqfl/metrics.hpp"

namespace dqfl {

using nlohmann::json;

struct ExperimentConfig {
  SynthConfig data;
  std::optional<std::filesystem::path> dataset_dir;  // load instead of generating
  RunConfig run;
  std::vector<StrategyConfig> strategies{StrategyConfig{}};
  std::vector<std::size_t> participants_sweep;  // empty: just run.participants
  std::size_t episodes = 1;
  bool final_greedy = true;
  std::size_t checkpoint_every = 10;
  std::vector<std::uint64_t> seeds{1};
  double fairness_alpha = 1.0;
  double histogram_bin_width = 0.1;
  std::filesystem::path output_dir = "out";

  std::vector<std::size_t> participant_counts() const {
    return participants_sweep.empty() ? std::vector<std::size_t>{run.participants} : participants_sweep;
  }
};

namespace detail {

inline void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline StrategyConfig parse_strategy(const json& j) {
  check_keys(j, {"kind", "q", "loss_floor"}, "strategy");
  StrategyConfig s;
  std::string kind;
  read(j, "kind", kind, "strategy");
  if (kind == "fedavg") {
    s.kind = StrategyKind::kFedAvg;
  } else if (kind == "static_q") {
    s.kind = StrategyKind::kStaticQ;
    if (!j.contains("q")) throw ConfigError("static_q strategy needs q");
  } else if (kind == "dynamic_q") {
    s.kind = StrategyKind::kDynamicQ;
  } else {
    throw ConfigError("unknown strategy kind '" + kind + "'");
  }
  if (s.kind != StrategyKind::kStaticQ && j.contains("q")) throw ConfigError("q is only valid for static_q");
  read(j, "q", s.q, "strategy");
  read(j, "loss_floor", s.loss_floor, "strategy");
  s.validate();
  return s;
}

inline json strategy_to_json(const StrategyConfig& s) {
  json j;
  switch (s.kind) {
    case StrategyKind::kFedAvg:
      j["kind"] = "fedavg";
      break;
    case StrategyKind::kStaticQ:
      j["kind"] = "static_q";
      j["q"] = s.q;
      break;
    case StrategyKind::kDynamicQ:
      j["kind"] = "dynamic_q";
      break;
  }
  j["loss_floor"] = s.loss_floor;
  return j;
}

}  // namespace detail

/// Parses and validates a config document. Unknown keys anywhere are errors.
inline ExperimentConfig parse_experiment_config(const json& root) {
  using detail::read;
  detail::check_keys(root,
                     {"schema_version", "data", "dataset_dir", "model", "local", "run", "agent", "strategies",
                      "participants_sweep", "episodes", "seeds", "fairness_alpha", "histogram_bin_width", "output_dir"},
                     "config");
  int version = kSchemaVersion;
  read(root, "schema_version", version, "config");
  if (version != kSchemaVersion) throw ConfigError("unsupported schema_version " + std::to_string(version));

  ExperimentConfig cfg;
  if (root.contains("data")) {
    const auto& d = root["data"];
    detail::check_keys(d,
                       {"num_clients", "input_dim", "num_classes", "alpha", "beta", "samples_min", "samples_max",
                        "label_skew", "logit_noise", "server_validation_fraction", "seed"},
                       "data");
    auto& s = cfg.data;
    read(d, "num_clients", s.num_clients, "data");
    read(d, "input_dim", s.input_dim, "data");
    read(d, "num_classes", s.num_classes, "data");
    read(d, "alpha", s.alpha, "data");
    read(d, "beta", s.beta, "data");
    read(d, "samples_min", s.samples_min, "data");
    read(d, "samples_max", s.samples_max, "data");
    read(d, "label_skew", s.label_skew, "data");
    read(d, "logit_noise", s.logit_noise, "data");
    read(d, "server_validation_fraction", s.server_validation_fraction, "data");
    read(d, "seed", s.seed, "data");
  }
  cfg.data.validate();
  if (root.contains("dataset_dir")) cfg.dataset_dir = root["dataset_dir"].get<std::string>();

  auto& run = cfg.run;
  run.model.input_dim = cfg.data.input_dim;
  run.model.num_classes = cfg.data.num_classes;
  if (root.contains("model")) {
    const auto& m = root["model"];
    detail::check_keys(m, {"kind", "hidden_dim", "weight_init_scale"}, "model");
    std::string kind = "logistic";
    read(m, "kind", kind, "model");
    if (kind == "logistic")
      run.model.kind = ModelKind::kLogistic;
    else if (kind == "mlp")
      run.model.kind = ModelKind::kMlp;
    else
      throw ConfigError("unknown model kind '" + kind + "'");
    read(m, "hidden_dim", run.model.hidden_dim, "model");
    read(m, "weight_init_scale", run.model.weight_init_scale, "model");
  }
  if (root.contains("local")) {
    const auto& l = root["local"];
    detail::check_keys(l, {"learning_rate", "batch_size", "local_epochs", "shuffle_seed_base", "full_train_loss"}, "local");
    read(l, "learning_rate", run.local.learning_rate, "local");
    read(l, "batch_size", run.local.batch_size, "local");
    read(l, "local_epochs", run.local.local_epochs, "local");
    read(l, "shuffle_seed_base", run.local.shuffle_seed_base, "local");
    read(l, "full_train_loss", run.local.full_train_loss, "local");
  }
  if (root.contains("run")) {
    const auto& r = root["run"];
    detail::check_keys(r,
                       {"rounds", "participants", "participation_fraction", "selection_seed", "init_seed",
                        "eval_every", "parallel_clients"},
                       "run");
    if (r.contains("participants") && r.contains("participation_fraction"))
      throw ConfigError("give either run.participants or run.participation_fraction, not both");
    read(r, "rounds", run.rounds, "run");
    read(r, "participants", run.participants, "run");
    if (r.contains("participation_fraction"))
      run.participants = participants_from_fraction(r["participation_fraction"].get<double>(), cfg.data.num_clients);
    read(r, "selection_seed", run.selection_seed, "run");
    read(r, "init_seed", run.init_seed, "run");
    read(r, "eval_every", run.eval_every, "run");
    read(r, "parallel_clients", run.parallel_clients, "run");
  }
  if (root.contains("agent")) {
    const auto& a = root["agent"];
    detail::check_keys(a,
                       {"q_grid", "hidden", "learning_rate", "gamma", "baseline_decay", "seed", "m_max",
                        "accuracy_in_state", "same_step_reward", "final_greedy", "checkpoint_every"},
                       "agent");
    read(a, "q_grid", run.agent.grid.values, "agent");
    read(a, "hidden", run.agent.hidden, "agent");
    read(a, "learning_rate", run.agent.learning_rate, "agent");
    read(a, "gamma", run.agent.gamma, "agent");
    read(a, "baseline_decay", run.agent.baseline_decay, "agent");
    read(a, "seed", run.agent.seed, "agent");
    read(a, "m_max", run.agent.m_max, "agent");
    read(a, "accuracy_in_state", run.agent.accuracy_in_state, "agent");
    read(a, "same_step_reward", run.agent.same_step_reward, "agent");
    read(a, "final_greedy", cfg.final_greedy, "agent");
    read(a, "checkpoint_every", cfg.checkpoint_every, "agent");
    run.agent.grid.validate();
  }
  if (root.contains("strategies")) {
    cfg.strategies.clear();
    for (const auto& s : root["strategies"]) cfg.strategies.push_back(detail::parse_strategy(s));
    if (cfg.strategies.empty()) throw ConfigError("strategies must not be empty");
  }
  read(root, "participants_sweep", cfg.participants_sweep, "config");
  read(root, "episodes", cfg.episodes, "config");
  read(root, "seeds", cfg.seeds, "config");
  read(root, "fairness_alpha", cfg.fairness_alpha, "config");
  read(root, "histogram_bin_width", cfg.histogram_bin_width, "config");
  if (root.contains("output_dir")) cfg.output_dir = root["output_dir"].get<std::string>();

  if (cfg.episodes < 1) throw ConfigError("episodes must be >= 1");
  if (cfg.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (cfg.checkpoint_every < 1) throw ConfigError("agent.checkpoint_every must be >= 1");
  if (!(cfg.fairness_alpha >= 0.0)) throw ConfigError("fairness_alpha must be >= 0");
  if (!(cfg.histogram_bin_width > 0.0)) throw ConfigError("histogram_bin_width must be > 0");
  for (auto m : cfg.participant_counts())
    if (m < 1 || m > cfg.data.num_clients) throw ConfigError("participants must be in [1, num_clients]");
  run.validate(cfg.data.num_clients);
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  json root;
  try {
    root = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_experiment_config(root);
}

/// Seeds of one concrete run: every base seed in the config mixed with the experiment seed.
inline SynthConfig data_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SynthConfig d = cfg.data;
  d.seed = derive_seed(cfg.data.seed, {seed});
  return d;
}

inline RunConfig run_for_seed(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t participants) {
  RunConfig r = cfg.run;
  r.participants = participants;
  r.selection_seed = derive_seed(cfg.run.selection_seed, {seed});
  r.init_seed = derive_seed(cfg.run.init_seed, {seed});
  r.local.shuffle_seed_base = derive_seed(cfg.run.local.shuffle_seed_base, {seed});
  r.agent.seed = derive_seed(cfg.run.agent.seed, {seed});
  return r;
}

inline Federation load_or_generate(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.dataset_dir) return import_federation(*cfg.dataset_dir);
  return generate(data_for_seed(cfg, seed));
}

struct RunResult {
  std::string label;
  std::size_t participants = 0;
  std::uint64_t seed = 0;
  RunSummary summary;
  FairnessReport fairness;
  std::vector<double> episode_returns;  // dynamic_q training only
};

/// Trains a fresh agent for `episodes` exploring runs, then (optionally) one greedy run.
/// Returns the summary of the final run.
inline RunSummary run_dynamic(const ClientPool& pool, const Batch& server_validation, RunConfig rc,
                              std::size_t episodes, bool final_greedy, Agent& agent,
                              std::vector<double>* returns = nullptr) {
  RunSummary last;
  rc.explore = true;
  for (std::size_t e = 0; e < episodes; ++e) {
    last = Simulation(pool, server_validation, rc, &agent).run();
    const double ret = agent.finish_episode();
    if (returns) returns->push_back(ret);
  }
  if (final_greedy) {
    rc.explore = false;
    last = Simulation(pool, server_validation, rc, &agent).run();
    agent.begin_episode();  // the greedy evaluation is not a training episode
  }
  return last;
}

inline RunResult run_single(const ExperimentConfig& cfg, const ClientPool& pool, const Batch& server_validation,
                            const StrategyConfig& strategy, std::uint64_t seed, std::size_t participants) {
  RunConfig rc = run_for_seed(cfg, seed, participants);
  rc.strategy = strategy;
  RunResult res;
  res.label = strategy.label();
  res.participants = participants;
  res.seed = seed;
  if (strategy.kind == StrategyKind::kDynamicQ) {
    Agent agent(rc.agent, rc.agent.state_dim(participants));
    res.summary = run_dynamic(pool, server_validation, rc, cfg.episodes, cfg.final_greedy, agent, &res.episode_returns);
  } else {
    res.summary = Simulation(pool, server_validation, rc).run();
  }
  res.fairness = fairness_report(res.summary.final_client_accuracies, cfg.fairness_alpha);
  return res;
}

/// Every (strategy, participants, seed) combination, in config order.
inline std::vector<RunResult> run_experiment(const ExperimentConfig& cfg) {
  std::vector<RunResult> results;
  for (auto seed : cfg.seeds) {
    const auto fed = load_or_generate(cfg, seed);
    RunConfig probe = cfg.run;
    if (fed.clients.empty() || fed.clients.front().train.dim != probe.model.input_dim)
      throw ConfigError("dataset does not match the configured input_dim");
    ClientPool pool(cfg.run.model, fed.clients);
    for (auto m : cfg.participant_counts()) {
      if (m > pool.size()) throw ConfigError("participants exceed the number of clients in the dataset");
      for (const auto& s : cfg.strategies) results.push_back(run_single(cfg, pool, fed.server_validation, s, seed, m));
    }
  }
  // Stable presentation order: strategy, participants, seed.
  std::vector<RunResult> ordered;
  for (const auto& s : cfg.strategies)
    for (auto m : cfg.participant_counts())
      for (auto seed : cfg.seeds)
        for (auto& r : results)
          if (r.label == s.label() && r.participants == m && r.seed == seed) ordered.push_back(std::move(r));
  return ordered;
}

// ---------------------------------------------------------------------------
// Serialization

inline json round_to_json(const RoundRecord& r, const std::string& label, std::size_t participants,
                          std::uint64_t seed, double fairness_alpha) {
  json weights = json::array();
  for (const auto& [id, w] : r.weights.entries) weights.push_back({{"client", id}, {"weight", w}});
  json j = {{"schema_version", kSchemaVersion},
            {"strategy", label},
            {"participants", participants},
            {"seed", seed},
            {"fairness_alpha", fairness_alpha},
            {"round", r.round},
            {"selected", r.selected},
            {"losses", r.losses},
            {"q", r.q},
            {"action_index", r.action_index ? json(*r.action_index) : json(nullptr)},
            {"weights", weights},
            {"weighted_loss", r.weighted_loss},
            {"reward", r.reward},
            {"global_accuracy", r.global_accuracy},
            {"client_accuracies", r.client_accuracies ? json(*r.client_accuracies) : json(nullptr)},
            {"bytes_down", r.bytes_down},
            {"bytes_up", r.bytes_up},
            {"messages", r.messages}};
  return j;
}

inline json fairness_to_json(const FairnessReport& f) {
  return {{"clients", f.clients},
          {"mean_accuracy", f.mean_accuracy},
          {"worst_decile", f.worst_decile},
          {"best_decile", f.best_decile},
          {"variance_pct2", f.variance_pct2},
          {"jain", f.jain},
          {"gini", f.gini},
          {"alpha", f.alpha},
          {"alpha_utility_sum", f.alpha_utility_sum}};
}

inline json run_to_json(const RunResult& r) {
  const auto& s = r.summary;
  return {{"strategy", r.label},
          {"strategy_config", detail::strategy_to_json(s.strategy)},
          {"participants", r.participants},
          {"seed", r.seed},
          {"rounds", s.rounds.size()},
          {"final_global_accuracy", s.final_global_accuracy},
          {"final_client_accuracies", s.final_client_accuracies},
          {"final_params", s.final_params.values},
          {"ledger",
           {{"bytes_down", s.ledger.bytes_down},
            {"bytes_up", s.ledger.bytes_up},
            {"messages_down", s.ledger.messages_down},
            {"messages_up", s.ledger.messages_up}}},
          {"fairness", fairness_to_json(r.fairness)},
          {"episode_returns", r.episode_returns}};
}

// ---------------------------------------------------------------------------
// Comparison table

/// Column set of comparison.csv; frozen.
inline constexpr const char* kComparisonHeader =
    "strategy,participants,seeds,mean_acc,mean_acc_std,worst10,worst10_std,best10,best10_std,variance,"
    "variance_std,jain,jain_std,gini,gini_std,alpha_utility,alpha_utility_std,bytes_down,bytes_up,messages";

/// What the comparison table needs from one finished run.
struct RunDigest {
  std::string label;
  std::size_t participants = 0;
  std::uint64_t seed = 0;
  FairnessReport fairness;
  MessageLedger ledger;
};

struct ComparisonRow {
  std::string label;
  std::size_t participants = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<FairnessReport> reports;
  std::vector<MessageLedger> ledgers;
};

inline std::vector<ComparisonRow> comparison_rows(const std::vector<RunDigest>& runs) {
  std::vector<ComparisonRow> rows;
  for (const auto& r : runs) {
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const ComparisonRow& row) { return row.label == r.label && row.participants == r.participants; });
    if (it == rows.end()) {
      rows.push_back({r.label, r.participants, {}, {}, {}});
      it = rows.end() - 1;
    }
    it->seeds.push_back(r.seed);
    it->reports.push_back(r.fairness);
    it->ledgers.push_back(r.ledger);
  }
  return rows;
}

namespace detail {

// Mean and sample standard deviation (0 for a single value).
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  const double m = mean(v);
  if (v.size() < 2) return {m, 0.0};
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size() - 1))};
}

}  // namespace detail

inline std::string format_comparison_csv(const std::vector<RunDigest>& runs) {
  std::string out = std::string(kComparisonHeader) + "\n";
  for (const auto& row : comparison_rows(runs)) {
    auto col = [&](auto field) {
      std::vector<double> v;
      for (const auto& f : row.reports) v.push_back(field(f));
      auto [m, s] = detail::mean_std(v);
      return format_double(m) + "," + format_double(s);
    };
    auto ledger_mean = [&](auto field) {
      std::vector<double> v;
      for (const auto& l : row.ledgers) v.push_back(static_cast<double>(field(l)));
      return format_double(mean(v));
    };
    std::string seeds;
    for (std::size_t i = 0; i < row.seeds.size(); ++i) seeds += (i ? ";" : "") + std::to_string(row.seeds[i]);
    out += row.label + "," + std::to_string(row.participants) + "," + seeds + ",";
    out += col([](const FairnessReport& f) { return 100.0 * f.mean_accuracy; }) + ",";
    out += col([](const FairnessReport& f) { return 100.0 * f.worst_decile; }) + ",";
    out += col([](const FairnessReport& f) { return 100.0 * f.best_decile; }) + ",";
    out += col([](const FairnessReport& f) { return f.variance_pct2; }) + ",";
    out += col([](const FairnessReport& f) { return f.jain; }) + ",";
    out += col([](const FairnessReport& f) { return f.gini; }) + ",";
    out += col([](const FairnessReport& f) { return f.alpha_utility_sum; }) + ",";
    out += ledger_mean([](const MessageLedger& l) { return l.bytes_down; }) + ",";
    out += ledger_mean([](const MessageLedger& l) { return l.bytes_up; }) + ",";
    out += ledger_mean([](const MessageLedger& l) { return l.messages_down + l.messages_up; }) + "\n";
  }
  return out;
}

inline RunDigest digest(const RunResult& r) {
  return {r.label, r.participants, r.seed, r.fairness, r.summary.ledger};
}

/// Rebuilds run digests from a rounds.jsonl stream: final accuracies come from
/// the last round of each run, byte and message totals from summing its rounds.
inline std::vector<RunDigest> digests_from_rounds(const std::string& jsonl) {
  struct Acc {
    RunDigest d;
    std::vector<double> final_acc;
    double alpha = 1.0;
  };
  std::vector<Acc> runs;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ConfigError("rounds.jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
    if (j.at("schema_version").get<int>() != kSchemaVersion) throw ConfigError("unsupported rounds.jsonl schema");
    const auto label = j.at("strategy").get<std::string>();
    const auto m = j.at("participants").get<std::size_t>();
    const auto seed = j.at("seed").get<std::uint64_t>();
    auto it = std::find_if(runs.begin(), runs.end(), [&](const Acc& a) {
      return a.d.label == label && a.d.participants == m && a.d.seed == seed;
    });
    if (it == runs.end()) {
      runs.push_back({});
      it = runs.end() - 1;
      it->d.label = label;
      it->d.participants = m;
      it->d.seed = seed;
    }
    it->alpha = j.at("fairness_alpha").get<double>();
    const auto selected = j.at("selected").size();
    it->d.ledger.bytes_down += j.at("bytes_down").get<std::uint64_t>();
    it->d.ledger.bytes_up += j.at("bytes_up").get<std::uint64_t>();
    it->d.ledger.messages_down += selected;
    it->d.ledger.messages_up += j.at("messages").get<std::uint64_t>() - selected;
    if (!j.at("client_accuracies").is_null()) it->final_acc = j["client_accuracies"].get<std::vector<double>>();
  }
  std::vector<RunDigest> out;
  for (auto& a : runs) {
    if (a.final_acc.empty()) throw ConfigError("run " + a.d.label + " has no client accuracy sweep");
    a.d.fairness = fairness_report(a.final_acc, a.alpha);
    out.push_back(a.d);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Artifact writing

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

inline void write_run_artifacts(const ExperimentConfig& cfg, const std::vector<RunResult>& results,
                                const std::filesystem::path& dir) {
  ensure_dir(dir);
  std::string rounds, qtrace = "strategy,participants,seed,round,q\n",
                      hist = "strategy,participants,seed,bin_lo,bin_hi,count\n";
  json runs = json::array();
  std::vector<RunDigest> digests;
  for (const auto& r : results) {
    for (const auto& rec : r.summary.rounds) {
      rounds += round_to_json(rec, r.label, r.participants, r.seed, cfg.fairness_alpha).dump() + "\n";
      qtrace += r.label + "," + std::to_string(r.participants) + "," + std::to_string(r.seed) + "," +
                std::to_string(rec.round) + "," + format_double(rec.q) + "\n";
    }
    for (const auto& bin : histogram(r.summary.final_client_accuracies, cfg.histogram_bin_width))
      hist += r.label + "," + std::to_string(r.participants) + "," + std::to_string(r.seed) + "," +
              format_double(bin.lo) + "," + format_double(bin.hi) + "," + std::to_string(bin.count) + "\n";
    runs.push_back(run_to_json(r));
    digests.push_back(digest(r));
  }
  json seeds = cfg.seeds;
  json summary = {{"schema_version", kSchemaVersion}, {"seeds", seeds}, {"episodes", cfg.episodes}, {"runs", runs}};
  write_text_file(dir / "rounds.jsonl", rounds);
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");
  write_text_file(dir / "comparison.csv", format_comparison_csv(digests));
  write_text_file(dir / "histogram.csv", hist);
  write_text_file(dir / "q_trace.csv", qtrace);
}

// ---------------------------------------------------------------------------
// Agent training

/// One-step environment with a constant state: action 0 pays 1, action 1 pays 0.
struct BanditEnvironment {
  std::size_t state_dim = 4;

  PolicyState state() const { return {std::vector<double>(state_dim, 1.0)}; }
  static double reward(std::size_t action) { return action == 0 ? 1.0 : 0.0; }
  static QGrid grid() { return {{0.0, 1.0}}; }

  /// Plays one episode and applies the policy update; returns the reward.
  double play(Agent& agent) const {
    agent.begin_episode();
    const auto a = agent.act(state(), true);
    agent.reward(0, reward(a.index));
    return agent.finish_episode();
  }

  double best_action_probability(const Agent& agent) const { return agent.net().probabilities(state().features)[0]; }
};

inline constexpr const char* kLearningCurveHeader = "episode,return,baseline,mean_q,greedy_prob";

struct TrainAgentOptions {
  bool bandit_mode = false;
  std::optional<std::filesystem::path> resume_from;
};

/// Trains the dynamic-q agent and writes checkpoint.txt and learning_curve.csv
/// into the output directory. Returns the number of episodes completed in total.
inline std::size_t train_agent(const ExperimentConfig& cfg, const TrainAgentOptions& opts,
                               const std::filesystem::path& dir) {
  ensure_dir(dir);
  const auto seed = cfg.seeds.front();
  RunConfig rc = run_for_seed(cfg, seed, cfg.run.participants);
  rc.strategy.kind = StrategyKind::kDynamicQ;
  rc.explore = true;

  BanditEnvironment bandit;
  std::optional<Federation> fed;
  std::optional<ClientPool> pool;
  std::size_t state_dim = rc.agent.state_dim(rc.participants);
  if (opts.bandit_mode) {
    rc.agent.grid = BanditEnvironment::grid();
    bandit.state_dim = state_dim;
  } else {
    fed = load_or_generate(cfg, seed);
    pool.emplace(cfg.run.model, fed->clients);
  }
  Agent agent(rc.agent, state_dim);
  if (opts.resume_from) agent.load_checkpoint(*opts.resume_from);

  const auto curve_path = dir / "learning_curve.csv";
  std::string curve;
  if (!(opts.resume_from && std::filesystem::exists(curve_path))) curve = std::string(kLearningCurveHeader) + "\n";

  const auto checkpoint = dir / "checkpoint.txt";
  const std::size_t start = agent.episodes();
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    double ret = 0.0, mean_q = 0.0, greedy_prob = 0.0;
    if (opts.bandit_mode) {
      ret = bandit.play(agent);
      mean_q = 0.0;
      for (const auto& s : agent.trajectory()) mean_q += rc.agent.grid.values[s.action_index];
      greedy_prob = bandit.best_action_probability(agent);
    } else {
      const auto summary = Simulation(*pool, fed->server_validation, rc, &agent).run();
      for (const auto& r : summary.rounds) mean_q += r.q;
      mean_q /= static_cast<double>(summary.rounds.size());
      ret = agent.finish_episode();
      const auto probs = agent.net().probabilities(agent.trajectory().front().state.features);
      greedy_prob = *std::max_element(probs.begin(), probs.end());
    }
    const double base = agent.baseline().values.empty() ? 0.0 : agent.baseline().values.front();
    curve += std::to_string(start + e + 1) + "," + format_double(ret) + "," + format_double(base) + "," +
             format_double(mean_q) + "," + format_double(greedy_prob) + "\n";
    if ((e + 1) % cfg.checkpoint_every == 0 || e + 1 == cfg.episodes) agent.save_checkpoint(checkpoint);
  }

  if (curve.rfind(kLearningCurveHeader, 0) == 0) {
    write_text_file(curve_path, curve);
  } else {
    std::ofstream out(curve_path, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to " + curve_path.string());
    out << curve;
  }
  return agent.episodes();
}

}  // namespace dqfl
