#include "esc/losses.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "esc/errors.hpp"

namespace esc {

LossKind parse_loss(const std::string& key) {
  if (key == "quadratic") return LossKind::Quadratic;
  if (key == "exp") return LossKind::Exp;
  if (key == "logistic") return LossKind::Logistic;
  if (key == "hinge") return LossKind::Hinge;
  throw InvalidArgument("unknown loss '" + key + "'");
}

std::string loss_key(LossKind k) {
  switch (k) {
    case LossKind::Quadratic: return "quadratic";
    case LossKind::Exp: return "exp";
    case LossKind::Logistic: return "logistic";
    case LossKind::Hinge: return "hinge";
  }
  return "?";
}

double loss_value(LossKind k, double z) {
  switch (k) {
    case LossKind::Quadratic: return 0.5 * (1.0 - z) * (1.0 - z);
    case LossKind::Exp: return std::exp(-z);
    case LossKind::Logistic:
      // log(1 + e^{-z}); for very negative z use -z + log1p(e^{z}).
      return z < -30.0 ? -z + std::log1p(std::exp(z)) : std::log1p(std::exp(-z));
    case LossKind::Hinge: return z < 1.0 ? 1.0 - z : 0.0;
  }
  return 0.0;
}

double loss_deriv(LossKind k, double z) {
  switch (k) {
    case LossKind::Quadratic: return z - 1.0;
    case LossKind::Exp: return -std::exp(-z);
    case LossKind::Logistic:
      if (z >= 0.0) {
        const double e = std::exp(-z);
        return -e / (1.0 + e);
      } else {
        return -1.0 / (1.0 + std::exp(z));
      }
    case LossKind::Hinge: return z < 1.0 ? -1.0 : 0.0;
  }
  return 0.0;
}

double loss_second(LossKind k, double z) {
  switch (k) {
    case LossKind::Quadratic: return 1.0;
    case LossKind::Exp: return std::exp(-z);
    case LossKind::Logistic: {
      const double e = std::exp(-std::abs(z));
      return e / ((1.0 + e) * (1.0 + e));
    }
    case LossKind::Hinge: return 0.0;
  }
  return 0.0;
}

GeneralConstants certified_general(LossKind k) {
  switch (k) {
    case LossKind::Exp: return {1.0, 1.0 / std::numbers::e, 1.0, 1.0};
    case LossKind::Logistic: return {1.0, 1.0 / (std::numbers::e + 1.0), 0.5, 0.25};
    case LossKind::Hinge: return {1.0, 1.0, 1.0, 0.0};
    case LossKind::Quadratic: break;
  }
  throw WrongVariant("quadratic loss has no general-loss constants");
}

ExpTypeConstants certified_exptype(LossKind k) {
  switch (k) {
    case LossKind::Exp: return {1.0, 1.0, 1.0};
    case LossKind::Logistic: return {0.5, 1.0, 1.0};
    default: break;
  }
  throw WrongVariant("loss '" + loss_key(k) + "' is not exponential-type");
}

namespace {

struct Tracker {
  GridCheck r;
  void see(double slack, double z, const char* which) {
    if (r.points == 0 || slack < r.worst_slack) {
      r.worst_slack = slack;
      r.worst_z = z;
      r.worst_inequality = which;
    }
  }
};

}  // namespace

GridCheck verify_general_constants(LossKind k, const GeneralConstants& c, int grid_points) {
  if (k == LossKind::Quadratic) throw WrongVariant("quadratic loss is not a general classification loss");
  if (grid_points < 2) throw InvalidArgument("grid_points must be >= 2");
  if (!(c.z0 > 0.0 && c.z0 <= 1.0) || !(c.g_min > 0.0 && c.g_min <= c.g_max) || c.h_max < 0.0)
    throw InvalidArgument("general-loss constants violate their own invariants");
  Tracker t;
  t.r.worst_slack = std::numeric_limits<double>::infinity();
  for (int p = 0; p < grid_points; ++p) {
    double z = c.z0 * p / (grid_points - 1);
    // Hinge: left derivative at the kink.
    if (k == LossKind::Hinge && z >= 1.0) z = std::nextafter(1.0, 0.0);
    const double g = -loss_deriv(k, z);
    const double h = loss_second(k, z);
    t.see(g - c.g_min, z, "g_min <= -l'");
    t.see(c.g_max - g, z, "-l' <= g_max");
    t.see(h, z, "0 <= l''");
    t.see(c.h_max - h, z, "l'' <= h_max");
    ++t.r.points;
  }
  t.r.pass = t.r.worst_slack >= 0.0;
  return t.r;
}

GridCheck verify_exptype_constants(LossKind k, const ExpTypeConstants& c, double R, int grid_points) {
  if (k != LossKind::Exp && k != LossKind::Logistic)
    throw WrongVariant("loss '" + loss_key(k) + "' is not exponential-type");
  if (grid_points < 2 || !(R > 0.0)) throw InvalidArgument("bad exp-type grid");
  Tracker t;
  t.r.worst_slack = std::numeric_limits<double>::infinity();
  for (int p = 0; p < grid_points; ++p) {
    const double z = -R + 2.0 * R * p / (grid_points - 1);
    const double l = loss_value(k, z);
    if (!(l > 0.0)) {
      t.see(-1.0, z, "l > 0");
      ++t.r.points;
      continue;
    }
    const double ratio1 = -loss_deriv(k, z) / l;
    const double ratio2 = loss_second(k, z) / l;
    t.see(c.g_b - ratio1, z, "-l'/l <= g_b");
    t.see(ratio2, z, "0 <= l''/l");
    t.see(c.h - ratio2, z, "l''/l <= h");
    if (z >= 0.0) t.see(ratio1 - c.g_a, z, "g_a <= -l'/l");
    ++t.r.points;
  }
  t.r.pass = t.r.worst_slack >= 0.0;
  return t.r;
}

}  // namespace esc
