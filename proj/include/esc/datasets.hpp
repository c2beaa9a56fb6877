#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "esc/linalg.hpp"

namespace esc {

enum class LabelKind { Binary, OneHot };

/// n samples in the unit ball with binary (+1 then -1) or one-hot labels.
/// Y is n x C; binary datasets use C = 1 with entries +-1 so that the
/// margin y_i^T f(x_i) has the same form for both label kinds.
struct LabeledDataset {
  Mat X;
  Mat Y;
  LabelKind kind = LabelKind::Binary;
  std::vector<int> labels;  // +1/-1 or class index
  int num_classes = 2;
  std::string source;

  int n() const { return static_cast<int>(X.rows()); }
  int d() const { return static_cast<int>(X.cols()); }
  int outputs() const { return static_cast<int>(Y.cols()); }
};

/// Canonical binary dataset: rows [0, n/2) labelled +1, the rest -1.
LabeledDataset make_binary(Mat X, std::string source);
LabeledDataset make_onehot(Mat X, const std::vector<int>& labels, int num_classes, std::string source);

/// Throws InvalidArgument when a LabeledDataset invariant is broken.
void check_dataset(const LabeledDataset& ds);

/// SHA-256 over shape, label kind, labels and the raw little-endian inputs.
std::string dataset_digest(const LabeledDataset& ds);

LabeledDataset gen_orthant_separable(int n, int d, std::uint64_t seed, bool include_antipodal,
                                     bool mirror_negatives = false);

/// Nonnegative unit vectors with one-hot labels: pairwise inner products >= 0.
LabeledDataset gen_concentrated(int n, int d, int num_classes, std::uint64_t seed);

struct SeparabilityReport {
  bool binary = true;
  bool satisfies_4_1_i = false;
  std::optional<double> mu0;          // reported value (1 when an antipodal pair exists)
  std::optional<double> mu0_witness;  // min-max over the finite witness family
  bool antipodal_pair = false;
  int antipodal_i = -1;
  int antipodal_j = -1;
  bool pairwise_witnesses = false;  // whether difference normals were enumerated
  std::size_t witness_count = 0;
  bool satisfies_4_3 = false;
  double s = 0.0;      // min pairwise inner product
  double gamma = 0.0;  // min same-class inner product (binary only)
};

/// Above this n the witness family only uses +-x_j directions.
inline constexpr int kPairwiseWitnessMaxN = 128;

SeparabilityReport validate_separable(const LabeledDataset& ds);
SeparabilityReport validate_concentrated(const LabeledDataset& ds);

struct GammaConstants {
  double gamma1 = 0.0;
  double gamma2 = 0.0;
};
GammaConstants compute_gamma_constants(const LabeledDataset& ds);

struct VReport {
  double V = 0.0;
  double bracket = 0.0;  // 1/2 - sqrt(8 log(n^2/delta)/m)
  double max_term = 0.0;
  double lambda_min_plus = 0.0;
  double lambda_min_minus = 0.0;
  double gamma = 0.0;
  bool vacuous = false;
};
VReport compute_V(const LabeledDataset& ds, int m, double delta);

struct DataConstants {
  GammaConstants gammas;
  VReport v;
};

LabeledDataset load_mnist(const std::string& images_path, const std::string& labels_path, int count,
                          bool normalize);
LabeledDataset load_cifar10(const std::string& bin_path, int count, bool normalize);

nlohmann::json to_json(const SeparabilityReport& r);
nlohmann::json to_json(const VReport& r);

/// CSV `index,label,x_0,...` plus a JSON sidecar at `csv_path + ".json"`.
void export_dataset_csv(const LabeledDataset& ds, const std::string& csv_path,
                        const nlohmann::json& sidecar);

}  // namespace esc
