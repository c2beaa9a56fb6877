#include "esc/models.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "esc/errors.hpp"
#include "esc/rng.hpp"

namespace esc {

std::size_t Network::num_params() const {
  return offset_c() + (has_bias() ? static_cast<std::size_t>(m()) : 0);
}

Vec Network::flatten() const {
  Vec theta(static_cast<Eigen::Index>(num_params()));
  Eigen::Index p = 0;
  for (int k = 0; k < m(); ++k)
    for (int a = 0; a < outputs(); ++a) theta(p++) = A(k, a);
  for (int k = 0; k < m(); ++k)
    for (int j = 0; j < d(); ++j) theta(p++) = B(k, j);
  if (has_bias())
    for (int k = 0; k < m(); ++k) theta(p++) = c(k);
  return theta;
}

void Network::assign_flat(const Vec& theta) {
  if (static_cast<std::size_t>(theta.size()) != num_params())
    throw InvalidArgument("assign_flat: parameter vector has wrong length");
  Eigen::Index p = 0;
  for (int k = 0; k < m(); ++k)
    for (int a = 0; a < outputs(); ++a) A(k, a) = theta(p++);
  for (int k = 0; k < m(); ++k)
    for (int j = 0; j < d(); ++j) B(k, j) = theta(p++);
  if (has_bias())
    for (int k = 0; k < m(); ++k) c(k) = theta(p++);
}

Network init_binary(int m, int d, const InitSpec& spec) {
  if (m < 1 || d < 1) throw InvalidArgument("init_binary: m and d must be positive");
  if (!(spec.kappa > 0.0)) throw InvalidArgument("init_binary: kappa must be positive");
  CounterRng rng(spec.seed, 0xB1);
  Network net;
  net.variant = Variant::Binary;
  net.A = Mat(m, 1);
  net.B = Mat(m, d);
  const double amp = 1.0 / std::sqrt(static_cast<double>(m));
  const double sd = spec.kappa / std::sqrt(static_cast<double>(m) * d);
  for (int k = 0; k < m; ++k) {
    net.A(k, 0) = rng.rademacher() * amp;
    for (int j = 0; j < d; ++j) net.B(k, j) = sd * rng.normal();
  }
  return net;
}

Network init_multi(int m, int d, int num_outputs, const InitSpec& spec) {
  if (m < 1 || d < 1 || num_outputs < 1) throw InvalidArgument("init_multi: sizes must be positive");
  if (!(spec.kappa > 0.0)) throw InvalidArgument("init_multi: kappa must be positive");
  CounterRng rng(spec.seed, 0xB2);
  Network net;
  net.variant = Variant::Multi;
  net.A = Mat::Constant(m, num_outputs, 1.0 / std::sqrt(static_cast<double>(m)));
  const double scale = std::sqrt(static_cast<double>(m) * (d + 1));
  net.c = Vec::Constant(m, spec.kappa / scale);
  net.B = Mat(m, d);
  const double sd = spec.kappa / scale;
  for (int k = 0; k < m; ++k)
    for (int j = 0; j < d; ++j) net.B(k, j) = sd * rng.normal();
  return net;
}

Mat preactivations(const Network& net, const Mat& X) {
  if (X.cols() != net.d()) throw InvalidArgument("input dimension does not match network");
  Mat P = X * net.B.transpose();
  if (net.has_bias()) P.rowwise() += net.c.transpose();
  return P;
}

Mat forward_batch(const Network& net, const Mat& X) {
  return preactivations(net, X).cwiseMax(0.0) * net.A;
}

Vec forward(const Network& net, const Vec& x) {
  if (x.size() != net.d()) throw InvalidArgument("input dimension does not match network");
  Mat X = x.transpose();
  return forward_batch(net, X).row(0).transpose();
}

Vec margins(const Network& net, const LabeledDataset& ds) {
  const Mat F = forward_batch(net, ds.X);
  return F.cwiseProduct(ds.Y).rowwise().sum();
}

void check_compatible(const Network& net, const LabeledDataset& ds, LossKind loss) {
  if (ds.d() != net.d()) throw InvalidArgument("dataset and network dimensions differ");
  if (net.variant == Variant::Binary) {
    if (ds.kind != LabelKind::Binary) throw WrongVariant("binary network needs binary labels");
  } else {
    if (ds.kind != LabelKind::OneHot) throw WrongVariant("multi-class network needs one-hot labels");
    if (ds.outputs() != net.outputs()) throw WrongVariant("output count differs from class count");
    if (loss == LossKind::Quadratic) throw WrongVariant("quadratic loss is only defined for the binary network");
  }
}

double empirical_loss(const Network& net, const LabeledDataset& ds, LossKind loss) {
  check_compatible(net, ds, loss);
  const Vec z = margins(net, ds);
  KahanSum s;
  for (Eigen::Index i = 0; i < z.size(); ++i) s.add(loss_value(loss, z(i)));
  return s.value() / static_cast<double>(z.size());
}

std::vector<int> all_indices(int n) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

Vec grad_loss(const Network& net, const LabeledDataset& ds, LossKind loss, const std::vector<int>& subset,
              Layers layers) {
  check_compatible(net, ds, loss);
  if (subset.empty()) throw InvalidArgument("grad_loss: empty sample subset");
  if (layers == Layers::InputOnly && net.variant != Variant::Binary)
    throw WrongVariant("input-layer-only training is defined for the binary network");
  const Eigen::Index ns = static_cast<Eigen::Index>(subset.size());
  Mat Xs(ns, ds.d()), Ys(ns, ds.outputs());
  for (Eigen::Index r = 0; r < ns; ++r) {
    const int i = subset[static_cast<std::size_t>(r)];
    if (i < 0 || i >= ds.n()) throw InvalidArgument("grad_loss: sample index out of range");
    Xs.row(r) = ds.X.row(i);
    Ys.row(r) = ds.Y.row(i);
  }
  const Mat P = preactivations(net, Xs);
  const Mat S = P.cwiseMax(0.0);
  const Mat F = S * net.A;
  Mat GY(ns, ds.outputs());
  for (Eigen::Index r = 0; r < ns; ++r) {
    const double z = F.row(r).dot(Ys.row(r));
    GY.row(r) = (loss_deriv(loss, z) / static_cast<double>(ns)) * Ys.row(r);
  }
  Mat D = GY * net.A.transpose();
  for (Eigen::Index r = 0; r < ns; ++r)
    for (Eigen::Index k = 0; k < D.cols(); ++k)
      if (!(P(r, k) > 0.0)) D(r, k) = 0.0;

  Network g;
  g.variant = net.variant;
  g.A = layers == Layers::InputOnly ? Mat::Zero(net.m(), net.outputs()) : Mat(S.transpose() * GY);
  g.B = D.transpose() * Xs;
  if (net.has_bias()) g.c = D.colwise().sum().transpose();
  return g.flatten();
}

Mat hessian_loss(const Network& net, const LabeledDataset& ds, LossKind loss, Layers layers,
                 std::size_t max_params) {
  check_compatible(net, ds, loss);
  if (layers == Layers::InputOnly && net.variant != Variant::Binary)
    throw WrongVariant("input-layer-only Hessian is defined for the binary network");
  const int n = ds.n(), m = net.m(), d = net.d(), C = net.outputs();
  const bool input_only = layers == Layers::InputOnly;
  const std::size_t p = input_only ? static_cast<std::size_t>(m) * d : net.num_params();
  if (p > max_params)
    throw SizeGuard("dense Hessian with " + std::to_string(p) + " parameters exceeds the guard of " +
                    std::to_string(max_params));
  const std::size_t offB = input_only ? 0 : net.offset_B();
  const std::size_t offC = input_only ? 0 : net.offset_c();

  const Mat P = preactivations(net, ds.X);
  const Mat S = P.cwiseMax(0.0);
  const Mat F = S * net.A;
  const Mat YA = ds.Y * net.A.transpose();  // (y_i^T a_k)
  Vec w2(n), w1(n);
  Mat J = Mat::Zero(n, static_cast<Eigen::Index>(p));
  for (int i = 0; i < n; ++i) {
    const double z = F.row(i).dot(ds.Y.row(i));
    w1(i) = loss_deriv(loss, z) / n;
    w2(i) = loss_second(loss, z) / n;
    for (int k = 0; k < m; ++k) {
      if (!input_only)
        for (int a = 0; a < C; ++a) J(i, static_cast<Eigen::Index>(k) * C + a) = ds.Y(i, a) * S(i, k);
      if (P(i, k) > 0.0) {
        for (int j = 0; j < d; ++j)
          J(i, static_cast<Eigen::Index>(offB + static_cast<std::size_t>(k) * d + j)) = YA(i, k) * ds.X(i, j);
        if (net.has_bias()) J(i, static_cast<Eigen::Index>(offC + k)) = YA(i, k);
      }
    }
  }
  Mat H = J.transpose() * w2.asDiagonal() * J;
  if (!input_only) {
    // Second-order part: the only nonzero blocks of grad^2 z_i couple a_k with (b_k, c_k).
    for (int k = 0; k < m; ++k)
      for (int a = 0; a < C; ++a) {
        const Eigen::Index ra = static_cast<Eigen::Index>(k) * C + a;
        for (int i = 0; i < n; ++i) {
          if (!(P(i, k) > 0.0)) continue;
          const double coef = w1(i) * ds.Y(i, a);
          if (coef == 0.0) continue;
          for (int j = 0; j < d; ++j) {
            const Eigen::Index cb = static_cast<Eigen::Index>(offB + static_cast<std::size_t>(k) * d + j);
            H(ra, cb) += coef * ds.X(i, j);
            H(cb, ra) += coef * ds.X(i, j);
          }
          if (net.has_bias()) {
            const Eigen::Index cc = static_cast<Eigen::Index>(offC + k);
            H(ra, cc) += coef;
            H(cc, ra) += coef;
          }
        }
      }
  }
  Mat Hs = 0.5 * (H + H.transpose());
  return Hs;
}

double param_norm(const Network& net) {
  double s = net.A.squaredNorm() + net.B.squaredNorm();
  if (net.has_bias()) s += net.c.squaredNorm();
  return std::sqrt(s);
}

void write_snapshot(const std::string& path, const Network& net, const nlohmann::json& meta) {
  nlohmann::json header = meta;
  header["variant"] = net.variant == Variant::Binary ? "binary" : "multi";
  header["m"] = net.m();
  header["d"] = net.d();
  header["C"] = net.outputs();
  header["num_params"] = net.num_params();
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write snapshot " + path);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const Vec theta = net.flatten();
  out.write(reinterpret_cast<const char*>(theta.data()), static_cast<std::streamsize>(theta.size() * sizeof(double)));
}

Network read_snapshot(const std::string& path, nlohmann::json* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open snapshot " + path);
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), sizeof len) || len > (1u << 20))
    throw FormatError("snapshot header length invalid");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError("snapshot header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("snapshot header is not JSON: ") + e.what());
  }
  Network net;
  net.variant = header.at("variant").get<std::string>() == "binary" ? Variant::Binary : Variant::Multi;
  const int m = header.at("m"), d = header.at("d"), C = header.at("C");
  net.A = Mat::Zero(m, C);
  net.B = Mat::Zero(m, d);
  if (net.has_bias()) net.c = Vec::Zero(m);
  Vec theta(static_cast<Eigen::Index>(net.num_params()));
  if (!in.read(reinterpret_cast<char*>(theta.data()), static_cast<std::streamsize>(theta.size() * sizeof(double))))
    throw FormatError("snapshot payload truncated");
  net.assign_flat(theta);
  if (meta) *meta = header;
  return net;
}

}  // namespace esc
