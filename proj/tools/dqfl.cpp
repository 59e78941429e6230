// dqfl: command-line front end for the fair federated learning simulator.
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
// 3 numerical divergence, 4 file write failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dqfl/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kDiverged = 3, kWriteFailed = 4 };

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed_override;
  bool parallel = false;
};

dqfl::ExperimentConfig load(const CommonOptions& o) {
  auto cfg = dqfl::load_experiment_config(o.config);
  if (o.seed_override) cfg.seeds = {*o.seed_override};
  if (o.parallel) cfg.run.parallel_clients = true;
  if (!o.out.empty()) cfg.output_dir = o.out;
  return cfg;
}

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "output directory (overrides output_dir)");
  cmd->add_option("--seed-override", o.seed_override, "run only this experiment seed");
  cmd->add_flag("--parallel", o.parallel, "train the selected clients of a round concurrently");
}

template <typename F>
int guarded(F&& body) {
  try {
    body();
    return kOk;
  } catch (const dqfl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const dqfl::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const dqfl::IoError& e) {
    std::cerr << "write failed: " << e.what() << '\n';
    return kWriteFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair federated learning simulator with a dynamic-q aggregation agent"};
  app.require_subcommand(1);

  CommonOptions run_opts, train_opts, gen_opts;
  bool bandit_mode = false;
  std::string resume;
  std::string report_dir;

  auto* run = app.add_subcommand("run", "run every configured strategy and seed, write artifacts");
  add_common(run, run_opts);

  auto* train = app.add_subcommand("train-agent", "train the q-selection agent over episodes");
  add_common(train, train_opts);
  train->add_flag("--bandit-mode", bandit_mode, "degenerate two-armed bandit environment");
  train->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  auto* gen = app.add_subcommand("gen-data", "generate and export a synthetic federation");
  add_common(gen, gen_opts);

  auto* report = app.add_subcommand("report", "rebuild comparison.csv from a stored rounds.jsonl");
  report->add_option("--out", report_dir, "directory holding rounds.jsonl")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (*run) {
    return guarded([&] {
      const auto cfg = load(run_opts);
      const auto results = dqfl::run_experiment(cfg);
      dqfl::write_run_artifacts(cfg, results, cfg.output_dir);
      std::cout << dqfl::read_text_file(cfg.output_dir / "comparison.csv");
    });
  }
  if (*train) {
    return guarded([&] {
      const auto cfg = load(train_opts);
      dqfl::TrainAgentOptions opts;
      opts.bandit_mode = bandit_mode;
      if (!resume.empty()) opts.resume_from = resume;
      const auto episodes = dqfl::train_agent(cfg, opts, cfg.output_dir);
      std::cout << "trained " << episodes << " episodes; checkpoint at "
                << (cfg.output_dir / "checkpoint.txt").string() << '\n';
    });
  }
  if (*gen) {
    return guarded([&] {
      const auto cfg = load(gen_opts);
      const auto data = dqfl::data_for_seed(cfg, cfg.seeds.front());
      const auto fed = dqfl::generate(data);
      dqfl::export_federation(fed, data, cfg.output_dir);
      const auto stats = dqfl::shard_stats(fed.clients);
      std::cout << "Dataset,Clients,Sample\nsynthetic," << stats.clients << ',' << stats.total_samples << '\n';
    });
  }
  if (*report) {
    return guarded([&] {
      const std::filesystem::path dir = report_dir;
      const auto digests = dqfl::digests_from_rounds(dqfl::read_text_file(dir / "rounds.jsonl"));
      const auto csv = dqfl::format_comparison_csv(digests);
      dqfl::write_text_file(dir / "comparison.csv", csv);
      std::cout << csv;
    });
  }
  return kFailure;
}
