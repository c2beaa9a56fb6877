#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "esc/models.hpp"

namespace esc {

struct LrSchedule {
  enum class Kind { Constant, TwoStagePoly, LossInverse };
  Kind kind = Kind::Constant;
  double eta = 0.01;  // Constant
  double eta0 = 0.0;  // step size at t = 0 for the loss-adaptive schedules
  double c = 0.0;
  double c_prime = 0.0;
  double r = 1.0;
  long long T0 = 0;
  /// Exploration only: switch TwoStagePoly to stage 2 at this step instead of T0.
  long long force_stage2_at = -1;

  static LrSchedule constant(double eta);
  static LrSchedule loss_inverse(double eta0, double c);
  static LrSchedule two_stage_poly(double eta0, double c, double c_prime, double r, long long T0);

  bool uses_loss() const { return kind != Kind::Constant; }
  double at(long long t, double loss) const;
  /// Empty when the schedule lies inside the theorem's parameter range.
  std::vector<std::string> range_notes() const;
  nlohmann::json to_json() const;
};

/// T0 = ceil((n log 2)^{2/(V c)}), saturated at LLONG_MAX.
long long two_stage_T0(int n, double V, double c);

struct Batching {
  enum class Kind { Full, Stochastic };
  Kind kind = Kind::Full;
  int B = 64;
  std::uint64_t seed = 0;
  bool with_replacement = true;
};

struct TrainConfig {
  long long steps = 0;
  Batching batching;
  Layers layers = Layers::All;
  int record_every = 1;
  bool keep_trajectory = false;
};

struct StepRecord {
  long long t = 0;
  double loss = 0.0;
  double eta = 0.0;
  double grad_norm = 0.0;
  double min_margin = 0.0;
  double max_margin = 0.0;
  double param_norm = 0.0;
  double max_abs_pred = 0.0;
  double max_pred = 0.0;  // max_{i,alpha} f_alpha(x_i)
  bool a_sign_ok = true;
};

struct HittingTime {
  long long T = -1;       // -1 when the conditions already fail at s <= 1
  bool censored = false;  // conditions never failed inside the horizon
};

enum class RunStatus { Completed, ConvergedExactly, Aborted };
std::string status_name(RunStatus s);

struct RunRecord {
  Variant variant = Variant::Binary;
  LossKind loss = LossKind::Quadratic;
  LrSchedule schedule;
  TrainConfig config;
  std::vector<StepRecord> steps;
  /// Per step s: prediction bound and output-weight sign conditions of T.
  std::vector<unsigned char> hit_ok;
  std::vector<Network> trajectory;
  RunStatus status = RunStatus::Completed;
  std::string status_detail;
  long long last_step = 0;
  HittingTime measured_T;
};

struct StepContext {
  long long t = 0;
  const Network* net = nullptr;
  double loss = 0.0;
  double eta = 0.0;
  bool has_step = false;                  // false at the final recorded state
  const std::vector<int>* batch = nullptr;  // sample multiset used for the step
  const Vec* grad = nullptr;              // direction of the step
};

using Observer = std::function<void(const StepContext&)>;

Network gd_step(const Network& net, const LabeledDataset& ds, LossKind loss, double eta,
                Layers layers = Layers::All);
Network sgd_step(const Network& net, const LabeledDataset& ds, LossKind loss, double eta,
                 const std::vector<int>& batch, Layers layers = Layers::All);

/// Batch of B indices drawn i.i.d. uniform on [n] (or without replacement).
std::vector<int> draw_batch(const Batching& b, int n, long long t);

RunRecord run(const Network& net0, const LabeledDataset& ds, LossKind loss, const LrSchedule& schedule,
              const TrainConfig& config, const Observer& observer = {});

/// Largest t with the hitting conditions holding for all s <= t+1.
HittingTime hitting_time_T(const RunRecord& record);
HittingTime hitting_time_from_flags(const std::vector<unsigned char>& ok);

/// floor(log 6 / (4 eta)) for the binary net, floor(log 4 / (4 eta)) for the multi-class net.
long long tstar(double eta, Variant variant);
/// Closed-form exponential hitting time T_e.
long long exp_hitting_time_Te(double eta, int n, int m, double delta, Variant variant);

void write_steps_csv(const RunRecord& record, const std::string& path);
nlohmann::json run_summary(const RunRecord& record);

}  // namespace esc
