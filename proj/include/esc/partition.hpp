#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "esc/models.hpp"
#include "esc/training.hpp"

namespace esc {

/// True/false: sign of y_i^T a_k. Living/dead: preactivation > 0 versus <= 0.
enum class Cell : std::uint8_t { TL = 0, TD = 1, FL = 2, FD = 3 };

struct PartitionSnapshot {
  long long t = 0;
  int n = 0;
  int m = 0;
  bool four_way = true;  // false for multi-class tables with every y_i^T a_k > 0
  std::vector<Cell> cells;  // row-major n x m

  Cell at(int i, int k) const { return cells[static_cast<std::size_t>(i) * m + k]; }
  std::array<int, 4> counts(int i) const;
  std::string digest() const;
};

PartitionSnapshot compute_partition(const Network& net, const LabeledDataset& ds, long long t = 0);

struct IntersectionStat {
  std::string name;  // e.g. "TL&TL"
  double max_deviation = 0.0;
  int worst_i = -1;
  int worst_j = -1;
  int violations = 0;
};

struct InitialPartitionStats {
  double bound = 0.0;  // sqrt(log(n^2/delta)/(2m))
  long long pairs = 0;
  std::vector<IntersectionStat> stats;  // TL&TL, TL&TD, TD&TL, TD&TD
  bool pass() const;
};

/// Observed |X_i(0) & Y_j(0)|/m against its expectation for same-class pairs.
/// TL&TL and TD&TD have mean (pi - arccos)/(4 pi); the mixed ones arccos/(4 pi).
InitialPartitionStats initial_partition_stats(const Network& net0, const LabeledDataset& ds, double delta);

struct DynamicsViolation {
  std::string rule;
  long long t = 0;
  int i = -1;
  int k = -1;
  std::string detail;
};

struct DynamicsResult {
  std::string status = "ok";  // ok | violations | insufficient-horizon
  std::map<std::string, long long> checks;
  std::map<std::string, long long> violation_counts;
  std::vector<DynamicsViolation> violations;  // first few, for diagnostics
  long long total_violations() const;
  nlohmann::json to_json() const;
};

/// Number of evenly spaced points (including endpoints) used on each segment.
inline constexpr int kSegmentPoints = 21;

/// Early-stage rules over consecutive states theta(0), theta(1), ...
/// Binary: S1..S5; multi-class: S1..S3. Transitions t -> t+1 are checked for t <= horizon.
class EarlyDynamicsChecker {
 public:
  EarlyDynamicsChecker(const LabeledDataset& ds, Variant variant, long long horizon);
  void observe(const Network& net, long long t);
  /// Same, reusing preactivations already computed for this state.
  void observe(const Network& net, const Mat& P, long long t);
  DynamicsResult result() const;
  /// Partition of the most recently observed state.
  const PartitionSnapshot& last() const { return prev_part_; }

 private:
  void violation(const std::string& rule, long long t, int i, int k, const std::string& detail);

  const LabeledDataset& ds_;
  Variant variant_;
  long long horizon_;
  long long last_t_ = -1;
  Mat prev_pre_;
  PartitionSnapshot prev_part_;
  Mat ref_pre_;  // preactivations at t = 1
  DynamicsResult res_;
};

/// Stage I (t = 0 -> 1) and Stage II (t >= 1) rules of the global analysis.
class GlobalDynamicsChecker {
 public:
  explicit GlobalDynamicsChecker(const LabeledDataset& ds);
  void observe(const Network& net, long long t);
  DynamicsResult result() const;
  const PartitionSnapshot& last() const { return prev_part_; }

 private:
  void violation(const std::string& rule, long long t, int i, int k, const std::string& detail);

  const LabeledDataset& ds_;
  long long last_t_ = -1;
  Mat prev_pre_;
  Mat prev_A_;
  PartitionSnapshot prev_part_;
  PartitionSnapshot part0_;
  Mat ref_pre_;
  DynamicsResult res_;
};

DynamicsResult check_dynamics_early(const std::vector<Network>& states, const LabeledDataset& ds, Variant variant,
                                    long long horizon);
DynamicsResult check_dynamics_global(const std::vector<Network>& states, const LabeledDataset& ds);

struct ClassificationCheck {
  bool pass = true;
  long long t = -1;
  int i = -1;
  double margin = 0.0;
};

/// y_i f(x_i) > 0 for every t >= 1 (t = 0 is excluded).
ClassificationCheck check_correct_classification(const RunRecord& record);
ClassificationCheck check_correct_classification(const std::vector<Network>& states, const LabeledDataset& ds);

void write_partition_counts_csv(const std::vector<PartitionSnapshot>& snaps, const std::string& path);
/// 2 bits per cell, row-major, four cells per byte (low bits first), after a JSON header.
void write_partition_dump(const std::vector<PartitionSnapshot>& snaps, const std::string& path);

}  // namespace esc
