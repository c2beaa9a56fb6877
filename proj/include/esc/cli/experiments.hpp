#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "esc/certificates.hpp"
#include "esc/cli/config.hpp"
#include "esc/datasets.hpp"
#include "esc/models.hpp"
#include "esc/partition.hpp"
#include "esc/prm.hpp"
#include "esc/training.hpp"

namespace esc::cli {

inline constexpr const char* kVersion = "0.1.0";

LabeledDataset build_dataset(const ExperimentConfig& cfg);

/// Everything needed to start a run, with the derivation of auto constants.
struct PreparedRun {
  LabeledDataset ds;
  Network net0;
  LossKind loss = LossKind::Quadratic;
  LrSchedule schedule;
  TrainConfig train;
  TheoryConstants constants;
  double kappa = 0.0;
  nlohmann::json derivation;
  std::vector<std::string> range_notes;  // theorem preconditions that do not hold
};

PreparedRun prepare_run(const ExperimentConfig& cfg);

struct PartitionCountRow {
  long long t = 0;
  int i = 0;
  std::array<int, 4> counts{};
};

struct ExperimentResult {
  std::string kind;
  std::optional<RunRecord> record;
  std::optional<PrmRunRecord> prm;
  CertificateSet certs;
  nlohmann::json summary = nlohmann::json::object();
  std::vector<PartitionCountRow> partition_counts;
  std::vector<PartitionSnapshot> partition_tables;  // only when requested
  std::string dataset_digest;

  bool aborted() const;
  bool failed() const { return aborted() || certs.any_failed(); }
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// steps.csv (or prm.csv), summary.json, certificates.json, certificates.txt,
/// partition_counts.csv and manifest.json under `dir`.
void write_outputs(const ExperimentConfig& cfg, const ExperimentResult& res, const std::string& dir);

int cmd_train(const ExperimentConfig& cfg, const std::string& out);
int cmd_prm(const ExperimentConfig& cfg, const std::string& out);
/// Re-runs the manifest in `run_dir` into `out` and compares digests.
int cmd_verify(const std::string& run_dir, const std::string& out);
int cmd_sweep(const SweepSpec& spec, const std::string& out, int jobs);
int cmd_gen_data(const ExperimentConfig& cfg, const std::string& out);
int cmd_report(const std::string& dir, std::ostream& os);

}  // namespace esc::cli
