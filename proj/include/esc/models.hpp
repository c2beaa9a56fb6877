#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "esc/datasets.hpp"
#include "esc/linalg.hpp"
#include "esc/losses.hpp"

namespace esc {

enum class Variant { Binary, Multi };

/// Two-layer ReLU network f(x) = sum_k a_k sigma(b_k^T x + c_k).
/// Binary: A is m x 1 and there is no bias (c stays empty).
/// Multi:  A is m x C and c holds the m biases.
/// Flat layout: A row-major, then B row-major, then c.
struct Network {
  Variant variant = Variant::Binary;
  Mat A;
  Mat B;
  Vec c;

  int m() const { return static_cast<int>(B.rows()); }
  int d() const { return static_cast<int>(B.cols()); }
  int outputs() const { return static_cast<int>(A.cols()); }
  bool has_bias() const { return variant == Variant::Multi; }
  std::size_t num_params() const;
  std::size_t offset_B() const { return static_cast<std::size_t>(m()) * outputs(); }
  std::size_t offset_c() const { return offset_B() + static_cast<std::size_t>(m()) * d(); }

  Vec flatten() const;
  void assign_flat(const Vec& theta);
};

enum class Layers { All, InputOnly };

struct InitSpec {
  double kappa = 0.0;
  std::uint64_t seed = 0;
};

/// a_k = +-1/sqrt(m) (Rademacher), b_k ~ N(0, kappa^2/(m d) I).
Network init_binary(int m, int d, const InitSpec& spec);
/// A = 1/sqrt(m) everywhere, c_k = kappa/sqrt(m(d+1)), b_k ~ N(0, kappa^2/(m(d+1)) I).
Network init_multi(int m, int d, int num_outputs, const InitSpec& spec);

/// n x m matrix of b_k^T x_i + c_k.
Mat preactivations(const Network& net, const Mat& X);
/// n x C outputs.
Mat forward_batch(const Network& net, const Mat& X);
Vec forward(const Network& net, const Vec& x);

/// z_i = y_i^T f(x_i).
Vec margins(const Network& net, const LabeledDataset& ds);

void check_compatible(const Network& net, const LabeledDataset& ds, LossKind loss);

/// L = (1/n) sum_i ltilde(z_i).
double empirical_loss(const Network& net, const LabeledDataset& ds, LossKind loss);

std::vector<int> all_indices(int n);

/// Gradient of the average loss over a multiset of sample indices.
/// Indicators use the strict convention 1{preactivation > 0}.
/// InputOnly zeroes the output-layer block.
Vec grad_loss(const Network& net, const LabeledDataset& ds, LossKind loss, const std::vector<int>& subset,
              Layers layers = Layers::All);

/// Dense Hessian of the empirical loss, sigma'' taken as 0.
/// InputOnly returns the (m d) x (m d) input-layer block only.
Mat hessian_loss(const Network& net, const LabeledDataset& ds, LossKind loss, Layers layers = Layers::All,
                 std::size_t max_params = 20000);

double param_norm(const Network& net);

/// Little-endian: u64 header length, JSON header, then the flat f64 array.
void write_snapshot(const std::string& path, const Network& net, const nlohmann::json& meta);
Network read_snapshot(const std::string& path, nlohmann::json* meta = nullptr);

}  // namespace esc
