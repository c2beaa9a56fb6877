#include <climits>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "esc/certificates.hpp"
#include "esc/datasets.hpp"
#include "esc/errors.hpp"
#include "esc/training.hpp"

using namespace esc;

namespace {

double kappa_early(const LabeledDataset& ds, double eta) {
  const double mu0 = *validate_separable(ds).mu0;
  const int n = ds.n();
  return std::min({1e-3, eta / 2000.0, eta / (3.0 * n), eta * mu0 / (3.0 * n)});
}

}  // namespace

TEST_CASE("a zero-gradient point is a fixed point") {
  const LabeledDataset ds = gen_orthant_separable(4, 3, 1, true);
  Network net = init_binary(3, 3, {0.1, 1});
  net.A.setZero();
  net.B.setZero();
  const Network next = gd_step(net, ds, LossKind::Quadratic, 0.5);
  CHECK(next.flatten() == net.flatten());
}

TEST_CASE("single neuron, single sample update by hand") {
  // f = a relu(b^T x), L = (f - y)^2 / 2 on one sample.
  Mat X(2, 2);
  X << 0.6, 0.8, -0.6, -0.8;
  const LabeledDataset ds = make_binary(X, "hand");
  Network net;
  net.A = Mat::Constant(1, 1, 0.5);
  net.B = Mat(1, 2);
  net.B << 0.3, 0.1;
  const double eta = 0.1;
  const Network next = sgd_step(net, ds, LossKind::Quadratic, eta, {0});
  const double pre = 0.3 * 0.6 + 0.1 * 0.8, f = 0.5 * pre, r = f - 1.0;
  CHECK(next.A(0, 0) == doctest::Approx(0.5 - eta * r * pre).epsilon(1e-15));
  CHECK(next.B(0, 0) == doctest::Approx(0.3 - eta * r * 0.5 * 0.6).epsilon(1e-15));
  CHECK(next.B(0, 1) == doctest::Approx(0.1 - eta * r * 0.5 * 0.8).epsilon(1e-15));
}

TEST_CASE("gradient descent is not additive in the step size") {
  const LabeledDataset ds = gen_orthant_separable(6, 3, 2, true);
  const Network net = init_binary(4, 3, {1.0, 2});
  const Network one = gd_step(net, ds, LossKind::Logistic, 0.2);
  const Network two = gd_step(gd_step(net, ds, LossKind::Logistic, 0.1), ds, LossKind::Logistic, 0.1);
  CHECK((one.flatten() - two.flatten()).norm() > 1e-12);
}

TEST_CASE("full batch SGD equals GD") {
  const LabeledDataset ds = gen_concentrated(8, 4, 3, 1);
  const Network net = init_multi(5, 4, 3, {0.5, 1});
  CHECK(sgd_step(net, ds, LossKind::Exp, 0.1, all_indices(8)).flatten() ==
        gd_step(net, ds, LossKind::Exp, 0.1).flatten());
}

TEST_CASE("batches are reproducible") {
  Batching b;
  b.B = 16;
  b.seed = 99;
  CHECK(draw_batch(b, 50, 3) == draw_batch(b, 50, 3));
  CHECK(draw_batch(b, 50, 3) != draw_batch(b, 50, 4));
  b.with_replacement = false;
  auto idx = draw_batch(b, 20, 0);
  std::sort(idx.begin(), idx.end());
  CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
}

TEST_CASE("stochastic gradients are unbiased") {
  const LabeledDataset ds = gen_concentrated(12, 4, 3, 5);
  const Network net = init_multi(4, 4, 3, {0.8, 5});
  const Vec full = grad_loss(net, ds, LossKind::Logistic, all_indices(12));
  Batching b;
  b.B = 4;
  b.seed = 17;
  const int draws = 10000;
  Vec sum = Vec::Zero(full.size()), sq = Vec::Zero(full.size());
  for (int t = 0; t < draws; ++t) {
    const Vec g = grad_loss(net, ds, LossKind::Logistic, draw_batch(b, 12, t));
    sum += g;
    sq += g.cwiseProduct(g);
  }
  const Vec mean = sum / draws;
  const Vec sd = ((sq / draws) - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt();
  int outside = 0;
  for (Eigen::Index k = 0; k < full.size(); ++k)
    if (std::abs(mean(k) - full(k)) > 3.0 * sd(k) / std::sqrt(draws) + 1e-15) ++outside;
  CHECK(outside <= std::max<Eigen::Index>(1, full.size() / 100));
}

TEST_CASE("hitting time from flags") {
  CHECK(hitting_time_from_flags({1, 1, 1, 0, 1}).T == 1);
  CHECK_FALSE(hitting_time_from_flags({1, 1, 1, 0, 1}).censored);
  CHECK(hitting_time_from_flags({1, 0}).T == -1);
  const HittingTime c = hitting_time_from_flags(std::vector<unsigned char>(45, 1));
  CHECK(c.censored);
  CHECK(c.T == 43);
}

TEST_CASE("hitting-time constants") {
  CHECK(tstar(0.01, Variant::Binary) == 44);
  CHECK(tstar(0.01, Variant::Multi) == 34);
  CHECK(tstar(0.005, Variant::Multi) == 69);
  CHECK(tstar(0.002, Variant::Multi) == 173);
  CHECK(tstar(0.001, Variant::Multi) == 346);
  for (double eta : {0.01, 0.005, 0.002})
    for (int m : {2000, 8000})
      for (double delta : {0.01, 1e-6}) {
        if (m < 144.0 * std::log(2.0 * 400.0 / delta)) continue;  // outside the theorem's width range
        CHECK(exp_hitting_time_Te(eta, 20, m, delta, Variant::Binary) >= tstar(eta, Variant::Binary) - 1);
        CHECK(exp_hitting_time_Te(eta, 20, m, delta, Variant::Multi) >= tstar(eta, Variant::Multi) - 1);
      }
  CHECK_THROWS_AS(tstar(0.0, Variant::Binary), InvalidArgument);
}

TEST_CASE("schedules") {
  const LrSchedule c = LrSchedule::constant(0.01);
  CHECK(c.at(5, 123.0) == 0.01);
  const LrSchedule li = LrSchedule::loss_inverse(0.3, 0.5);
  CHECK(li.at(0, 2.0) == 0.3);
  CHECK(li.at(3, 2.0) == 0.25);
  const LrSchedule tp = LrSchedule::two_stage_poly(0.01, 0.1, 0.2, 0.5, 10);
  CHECK(tp.at(0, 1.0) == 0.01);
  CHECK(tp.at(4, 0.5) == doctest::Approx(0.1 / (4 * 0.5)));
  CHECK(two_stage_T0(20, 1e-4, 0.1) == LLONG_MAX);
  CHECK(two_stage_T0(20, 0.0, 0.1) == LLONG_MAX);
  CHECK(two_stage_T0(1, 1.0, 1.0) >= 1);
  CHECK(LrSchedule::loss_inverse(0.3, 0.5).range_notes().empty());
  CHECK_FALSE(LrSchedule::loss_inverse(5.0, 0.5).range_notes().empty());
}

TEST_CASE("zero steps gives a single record") {
  const LabeledDataset ds = gen_orthant_separable(4, 3, 1, true);
  TrainConfig tc;
  tc.steps = 0;
  const RunRecord r = run(init_binary(8, 3, {1e-3, 1}), ds, LossKind::Quadratic, LrSchedule::constant(0.01), tc);
  REQUIRE(r.steps.size() == 1);
  CHECK(r.steps[0].t == 0);
}

TEST_CASE("early binary descent and hitting time") {
  const LabeledDataset ds = gen_orthant_separable(20, 10, 3, true);
  const double eta = 0.01, delta = 0.01;
  const int m = 64;
  TrainConfig tc;
  tc.steps = 44;
  const RunRecord r = run(init_binary(m, 10, {kappa_early(ds, eta), 3}), ds, LossKind::Quadratic,
                          LrSchedule::constant(eta), tc);
  const GammaConstants g = compute_gamma_constants(ds);
  const double descent = r.steps.front().loss - r.steps.back().loss;
  CHECK(descent >= descent_bound_theorem1(g.gamma1, g.gamma2, 20, m, delta));
  CHECK(r.measured_T.T + 1 >= 44);
}

TEST_CASE("multi-class hitting time") {
  const LabeledDataset ds = gen_concentrated(30, 10, 3, 2);
  TrainConfig tc;
  tc.steps = 34;
  const double kappa = std::min(0.01 / 10, 0.01 / 90);
  const RunRecord r = run(init_multi(100, 10, 3, {kappa, 2}), ds, LossKind::Logistic, LrSchedule::constant(0.01), tc);
  CHECK(r.measured_T.T + 1 >= 34);
}

TEST_CASE("loss-inverse schedule contracts by 1 - Vc/2 per step") {
  const LabeledDataset ds = gen_orthant_separable(20, 20, 1, true);
  const int m = 1000;
  const double V = compute_V(ds, m, 1e-10).V;
  REQUIRE(V > 0.0);
  const double mu0 = *validate_separable(ds).mu0;
  const double kappa = std::min({0.3 / 2000, 0.3 * mu0 / 60.0, 0.3 / 40.0});
  TrainConfig tc;
  tc.steps = 200;
  tc.layers = Layers::InputOnly;
  const RunRecord r = run(init_binary(m, 20, {kappa, 1}), ds, LossKind::Exp, LrSchedule::loss_inverse(0.3, 0.5), tc);
  for (std::size_t k = 1; k + 1 < r.steps.size(); ++k)
    CHECK(r.steps[k + 1].loss <= (1.0 - V * 0.5 / 2.0) * r.steps[k].loss);
}

TEST_CASE("steps CSV") {
  const LabeledDataset ds = gen_orthant_separable(4, 3, 1, true);
  TrainConfig tc;
  tc.steps = 3;
  const RunRecord r = run(init_binary(8, 3, {1e-3, 1}), ds, LossKind::Quadratic, LrSchedule::constant(0.01), tc);
  const auto p = std::filesystem::temp_directory_path() / "esc_steps.csv";
  write_steps_csv(r, p.string());
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("t,loss,eta,grad_norm", 0) == 0);
  int lines = 0;
  for (std::string s; std::getline(in, s);) ++lines;
  CHECK(lines == 4);
  std::filesystem::remove(p);
}
