#include <cmath>
#include <numbers>

#include "doctest.h"
#include "esc/errors.hpp"
#include "esc/losses.hpp"

using namespace esc;

namespace {
double fd1(LossKind k, double z) {
  const double h = 1e-6;
  return (loss_value(k, z + h) - loss_value(k, z - h)) / (2 * h);
}
double fd2(LossKind k, double z) {
  const double h = 1e-5;
  return (loss_deriv(k, z + h) - loss_deriv(k, z - h)) / (2 * h);
}
}  // namespace

TEST_CASE("closed forms at zero") {
  CHECK(loss_value(LossKind::Logistic, 0.0) == doctest::Approx(std::log(2.0)));
  CHECK(loss_deriv(LossKind::Logistic, 0.0) == doctest::Approx(-0.5));
  CHECK(loss_value(LossKind::Exp, 0.0) == 1.0);
  CHECK(-loss_deriv(LossKind::Exp, 0.0) / loss_value(LossKind::Exp, 0.0) == 1.0);
  CHECK(loss_value(LossKind::Hinge, 0.0) == 1.0);
  CHECK(loss_deriv(LossKind::Hinge, 0.5) == -1.0);
  CHECK(loss_deriv(LossKind::Hinge, 1.5) == 0.0);
}

TEST_CASE("derivatives agree with finite differences") {
  for (LossKind k : {LossKind::Quadratic, LossKind::Exp, LossKind::Logistic})
    for (double z : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
      CHECK(loss_deriv(k, z) == doctest::Approx(fd1(k, z)).epsilon(1e-7));
      CHECK(loss_second(k, z) == doctest::Approx(fd2(k, z)).epsilon(1e-6));
    }
}

TEST_CASE("logistic is stable at large |z|") {
  CHECK(std::isfinite(loss_value(LossKind::Logistic, -800.0)));
  CHECK(loss_value(LossKind::Logistic, -800.0) == doctest::Approx(800.0));
  CHECK(loss_value(LossKind::Logistic, 800.0) >= 0.0);
  CHECK(std::isfinite(loss_deriv(LossKind::Logistic, 800.0)));
}

TEST_CASE("certified general constants") {
  const GeneralConstants lg = certified_general(LossKind::Logistic);
  CHECK(lg.z0 == 1.0);
  CHECK(lg.g_min == doctest::Approx(1.0 / (std::numbers::e + 1.0)));
  CHECK(lg.g_max == 0.5);
  CHECK(lg.h_max == 0.25);
  CHECK(verify_general_constants(LossKind::Exp, {1.0, 1.0 / std::numbers::e, 1.0, 1.0}, 1001).pass);
  CHECK(verify_general_constants(LossKind::Hinge, {1.0, 1.0, 1.0, 0.0}, 1001).pass);
  CHECK(verify_general_constants(LossKind::Logistic, lg, 1001).pass);
  const GridCheck bad = verify_general_constants(LossKind::Logistic, {1.0, 0.5, 0.5, 0.25}, 1001);
  CHECK_FALSE(bad.pass);
  CHECK(bad.worst_z > 0.9);
}

TEST_CASE("certified exponential-type constants") {
  CHECK(verify_exptype_constants(LossKind::Logistic, {0.5, 1.0, 1.0}, 50.0, 4001).pass);
  const GridCheck e = verify_exptype_constants(LossKind::Exp, {1.0, 1.0, 1.0}, 50.0, 4001);
  CHECK(e.pass);
  CHECK(e.worst_slack == doctest::Approx(0.0));
  // -l'/l equals 1/(2 log 2) ~ 0.721 at z = 0, so a claimed g_a of 0.8 fails there.
  const GridCheck bad = verify_exptype_constants(LossKind::Logistic, {0.8, 1.0, 1.0}, 50.0, 4001);
  CHECK_FALSE(bad.pass);
  CHECK(std::abs(bad.worst_z) < 1e-9);
  CHECK_THROWS_AS(verify_exptype_constants(LossKind::Hinge, {1, 1, 1}, 1.0, 10), WrongVariant);
  CHECK_THROWS_AS(certified_exptype(LossKind::Hinge), WrongVariant);
}

TEST_CASE("loss keys round-trip") {
  for (LossKind k : {LossKind::Quadratic, LossKind::Exp, LossKind::Logistic, LossKind::Hinge})
    CHECK(parse_loss(loss_key(k)) == k);
  CHECK_THROWS_AS(parse_loss("softmax"), InvalidArgument);
}
