#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "esc/datasets.hpp"
#include "esc/errors.hpp"
#include "esc/models.hpp"

using namespace esc;

namespace {

Vec fd_grad(Network net, const LabeledDataset& ds, LossKind loss, Layers layers = Layers::All) {
  Vec theta = net.flatten();
  Vec g = Vec::Zero(theta.size());
  const double h = 1e-6;
  const Eigen::Index end = layers == Layers::InputOnly ? static_cast<Eigen::Index>(net.offset_c()) : theta.size();
  for (Eigen::Index k = static_cast<Eigen::Index>(layers == Layers::InputOnly ? net.offset_B() : 0); k < end; ++k) {
    const double keep = theta(k);
    theta(k) = keep + h;
    net.assign_flat(theta);
    const double up = empirical_loss(net, ds, loss);
    theta(k) = keep - h;
    net.assign_flat(theta);
    const double dn = empirical_loss(net, ds, loss);
    theta(k) = keep;
    g(k) = (up - dn) / (2 * h);
  }
  return g;
}

bool kink_free(const Network& net, const LabeledDataset& ds, LossKind loss) {
  if ((preactivations(net, ds.X).array().abs() <= 1e-4).any()) return false;
  return loss != LossKind::Hinge || ((margins(net, ds).array() - 1.0).abs() > 1e-4).all();
}

}  // namespace

TEST_CASE("binary initialization") {
  const Network a = init_binary(4, 3, {0.001, 0});
  for (int k = 0; k < 4; ++k) CHECK(std::abs(a.A(k, 0)) == 0.5);
  const Network b = init_binary(4, 3, {0.001, 0});
  CHECK(a.flatten() == b.flatten());
  CHECK(param_norm(a) >= 1.0);

  const int m = 1000, d = 50;
  const double kappa = 0.01;
  const Network n = init_binary(m, d, {kappa, 1});
  const double mean = n.B.rowwise().squaredNorm().mean();
  const double var1 = kappa * kappa / (m * d);
  const double sd = std::sqrt(2.0 * d) * var1 / std::sqrt(static_cast<double>(m));
  CHECK(std::abs(mean - kappa * kappa / m) <= 3.0 * sd);
}

TEST_CASE("multi-class initialization") {
  const Network a = init_multi(9, 3, 10, {0.01, 0});
  CHECK((a.A.array() == 1.0 / 3.0).all());
  const Network b = init_multi(4, 3, 2, {0.01, 5});
  CHECK((b.c.array() == 0.0025).all());
  CHECK(b.flatten() == init_multi(4, 3, 2, {0.01, 5}).flatten());
  CHECK(b.num_params() == 4 * 2 + 4 * 3 + 4);
}

TEST_CASE("forward on hand-built nets") {
  Network net;
  net.A = Mat::Ones(1, 1);
  net.B = Mat(1, 2);
  net.B << 2, 0;
  Vec x(2);
  x << 1, 1;
  CHECK(forward(net, x)(0) == 2.0);
  net.B << -1, 0;
  x << 1, 0;
  CHECK(forward(net, x)(0) == 0.0);
}

TEST_CASE("initial predictions are at most 2 kappa") {
  const LabeledDataset ds = gen_orthant_separable(20, 10, 3, true);
  const double kappa = 1e-3;
  const Network net = init_binary(512, 10, {kappa, 3});
  CHECK(forward_batch(net, ds.X).cwiseAbs().maxCoeff() <= 2.0 * kappa);
}

TEST_CASE("analytic gradients match finite differences") {
  for (std::uint64_t s = 0; s < 6; ++s) {
    const LabeledDataset bin = gen_orthant_separable(6, 4, 10 + s, true);
    const LabeledDataset one = gen_concentrated(6, 4, 3, 20 + s);
    const Network nb = init_binary(5, 4, {2.0, 30 + s});
    const Network nm = init_multi(5, 4, 3, {2.0, 40 + s});
    for (LossKind loss : {LossKind::Quadratic, LossKind::Exp, LossKind::Logistic, LossKind::Hinge}) {
      if (kink_free(nb, bin, loss)) {
        const Vec g = grad_loss(nb, bin, loss, all_indices(6));
        CHECK((g - fd_grad(nb, bin, loss)).norm() <= 1e-5 * std::max(g.norm(), 1e-8));
        const Vec gi = grad_loss(nb, bin, loss, all_indices(6), Layers::InputOnly);
        CHECK((gi - fd_grad(nb, bin, loss, Layers::InputOnly)).norm() <= 1e-5 * std::max(gi.norm(), 1e-8));
        CHECK(gi.head(nb.offset_B()).isZero(0.0));
      }
      if (loss != LossKind::Quadratic && kink_free(nm, one, loss)) {
        const Vec g = grad_loss(nm, one, loss, all_indices(6));
        CHECK((g - fd_grad(nm, one, loss)).norm() <= 1e-5 * std::max(g.norm(), 1e-8));
      }
    }
  }
}

TEST_CASE("degenerate gradients") {
  const LabeledDataset ds = gen_orthant_separable(4, 3, 1, true);
  Network net = init_binary(3, 3, {0.5, 1});
  net.A.setZero();
  const Vec g = grad_loss(net, ds, LossKind::Quadratic, all_indices(4));
  CHECK(g.segment(net.offset_B(), 9).isZero(0.0));

  // One sample fitted exactly: f(x) = y gives a zero residual.
  Network fit;
  fit.A = Mat::Ones(1, 1);
  fit.B = ds.X.row(0);
  const double f0 = forward(fit, ds.X.row(0).transpose())(0);
  fit.A(0, 0) = ds.Y(0, 0) / f0;
  CHECK(grad_loss(fit, ds, LossKind::Quadratic, {0}).isZero(1e-15));
}

TEST_CASE("Hessian is symmetric and matches differenced gradients") {
  const LabeledDataset ds = gen_orthant_separable(6, 4, 2, true);
  Network net = init_binary(5, 4, {2.0, 7});
  REQUIRE(kink_free(net, ds, LossKind::Logistic));
  const Mat H = hessian_loss(net, ds, LossKind::Logistic);
  CHECK((H - H.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Vec theta = net.flatten();
  const double h = 1e-6;
  Mat F(H.rows(), H.cols());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Network p = net, q = net;
    Vec tp = theta, tq = theta;
    tp(k) += h;
    tq(k) -= h;
    p.assign_flat(tp);
    q.assign_flat(tq);
    F.col(k) = (grad_loss(p, ds, LossKind::Logistic, all_indices(6)) - grad_loss(q, ds, LossKind::Logistic, all_indices(6))) / (2 * h);
  }
  CHECK((H - F).norm() <= 1e-5 * H.norm());
  CHECK_THROWS_AS(hessian_loss(net, ds, LossKind::Logistic, Layers::All, 10), SizeGuard);
}

TEST_CASE("margins") {
  const LabeledDataset ds = gen_orthant_separable(8, 3, 4, true);
  Network net = init_binary(4, 3, {0.1, 4});
  net.B.setZero();
  CHECK(margins(net, ds).isZero(0.0));
}

TEST_CASE("snapshots round-trip") {
  const Network net = init_multi(6, 5, 3, {0.3, 2});
  const auto p = std::filesystem::temp_directory_path() / "esc_snapshot.bin";
  write_snapshot(p.string(), net, {{"t", 3}});
  nlohmann::json meta;
  const Network back = read_snapshot(p.string(), &meta);
  CHECK(back.flatten() == net.flatten());
  CHECK(meta["t"] == 3);
  std::filesystem::remove(p);
}

TEST_CASE("compatibility checks") {
  const LabeledDataset ds = gen_orthant_separable(4, 3, 1, true);
  const Network multi = init_multi(3, 3, 2, {0.1, 1});
  CHECK_THROWS(check_compatible(multi, ds, LossKind::Logistic));
}
