#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "esc/errors.hpp"

namespace esc::cli {

/// Field-level configuration error; the message starts with the JSON path.
struct ConfigError : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

struct DatasetSpec {
  std::string source;  // orthant | concentrated | mnist | cifar10
  int n = 0;
  int d = 0;
  int classes = 2;
  std::optional<std::uint64_t> seed;
  bool antipodal = true;
  bool mirror = false;
  std::string images;
  std::string labels;
  std::string path;
  int count = 0;
  bool normalize = true;
};

struct ModelSpec {
  int m = 0;
  std::optional<double> kappa;  // empty means derive from the theorem's setting
  std::optional<std::uint64_t> seed;
};

struct ScheduleSpec {
  std::string kind;  // constant | loss-inverse | two-stage-poly
  double eta = 0.0;
  double eta0 = 0.0;
  double c = 0.0;
  double c_prime = 0.0;
  double r = 1.0;
  std::optional<long long> T0;  // empty means computed from V and c
  long long force_stage2_at = -1;
};

struct TrainSpec {
  long long steps = 0;
  std::string batching = "full";
  int batch_size = 64;
  std::optional<std::uint64_t> batch_seed;
  bool with_replacement = true;
  std::string layers = "all";
  int record_every = 1;
};

struct CheckSpec {
  bool gram = true;
  int hessian_points = 0;
  int hessian_max_params = 4000;
  bool partition_dump = false;
};

struct PrmSpec {
  int d = 10;
  int m = 10;
  int M = 10;
  double kappa = 0.1;
  std::optional<double> eta;  // empty means the admissible bound itself
  long long steps = 0;
  std::optional<std::uint64_t> seed;
};

struct ExperimentConfig {
  std::string kind;  // early-binary | early-multiclass | global-poly | global-exp | prm | certify-only
  std::uint64_t seed = 0;
  std::optional<double> delta;
  std::optional<DatasetSpec> dataset;
  std::optional<ModelSpec> model;
  std::string loss;
  std::optional<ScheduleSpec> schedule;
  TrainSpec train;
  CheckSpec checks;
  std::optional<PrmSpec> prm;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
/// Normalized echo; parse_config(config_to_json(c)) reproduces c.
nlohmann::json config_to_json(const ExperimentConfig& c);

struct SweepAxis {
  std::string pointer;  // JSON pointer into the base config, e.g. /model/m
  std::vector<nlohmann::json> values;
};

struct SweepSpec {
  nlohmann::json base;
  std::vector<SweepAxis> axes;
  std::size_t size() const;
  /// Config for cross-product entry `index` (first axis varies slowest).
  nlohmann::json entry(std::size_t index, std::vector<nlohmann::json>* values = nullptr) const;
};

inline constexpr std::size_t kMaxSweepEntries = 10000;

SweepSpec parse_sweep(const nlohmann::json& j);
SweepSpec load_sweep(const std::string& path);

nlohmann::json read_json_file(const std::string& path);

}  // namespace esc::cli
