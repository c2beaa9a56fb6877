#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "esc/cli/config.hpp"
#include "esc/cli/experiments.hpp"
#include "esc/errors.hpp"

namespace {

esc::cli::ExperimentConfig load(const std::string& path, const std::optional<std::uint64_t>& seed) {
  esc::cli::ExperimentConfig cfg = esc::cli::load_config(path);
  if (seed) cfg.seed = *seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Early-stage convergence experiments for two-layer ReLU networks"};
  app.set_version_flag("--version", std::string(esc::cli::kVersion));
  app.require_subcommand(1);

  std::string config, out = "runs/out", run_dir, dir;
  std::optional<std::uint64_t> seed;
  int jobs = 1;

  auto* gen = app.add_subcommand("gen-data", "Generate or load a dataset and export it as CSV");
  gen->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output directory");
  gen->add_option("--seed", seed, "Override the master seed");

  auto* train = app.add_subcommand("train", "Run an experiment and emit certificates");
  train->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "Output directory");
  train->add_option("--seed", seed, "Override the master seed");

  auto* verify = app.add_subcommand("verify", "Re-run a stored run from its manifest and compare digests");
  verify->add_option("run_dir", run_dir, "Run directory holding manifest.json")->required()->check(CLI::ExistingDirectory);
  verify->add_option("--out", out, "Output directory for the re-run");

  auto* sweep = app.add_subcommand("sweep", "Run a grid of experiments");
  sweep->add_option("--config", config, "Sweep spec (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out, "Output directory");
  sweep->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* prm = app.add_subcommand("prm", "Teacher-student population-loss experiment");
  prm->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  prm->add_option("--out", out, "Output directory");
  prm->add_option("--seed", seed, "Override the master seed");

  auto* report = app.add_subcommand("report", "Print the certificate table of a run or sweep");
  report->add_option("dir", dir, "Run or sweep directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return esc::cli::cmd_gen_data(load(config, seed), out);
    if (*train) return esc::cli::cmd_train(load(config, seed), out);
    if (*verify) return esc::cli::cmd_verify(run_dir, out);
    if (*sweep) return esc::cli::cmd_sweep(esc::cli::load_sweep(config), out, jobs);
    if (*prm) return esc::cli::cmd_prm(load(config, seed), out);
    if (*report) return esc::cli::cmd_report(dir, std::cout);
  } catch (const esc::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
