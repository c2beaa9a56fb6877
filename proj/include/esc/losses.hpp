#pragma once

#include <string>

#include "esc/linalg.hpp"

namespace esc {

/// Losses written in margin form: the per-sample loss is ltilde(z) with
/// z = y^T f(x). The quadratic loss 1/2 (f - y)^2 becomes 1/2 (1 - z)^2
/// for labels with y^T y = 1.
enum class LossKind { Quadratic, Exp, Logistic, Hinge };

LossKind parse_loss(const std::string& key);
std::string loss_key(LossKind k);

double loss_value(LossKind k, double z);
double loss_deriv(LossKind k, double z);
double loss_second(LossKind k, double z);

/// Constants of the general classification-loss assumption.
struct GeneralConstants {
  double z0 = 1.0;
  double g_min = 0.0;
  double g_max = 0.0;
  double h_max = 0.0;
};

/// Constants of the exponential-type assumption.
struct ExpTypeConstants {
  double g_a = 0.0;
  double g_b = 0.0;
  double h = 0.0;
};

/// Constants the losses are certified with (exp, logistic, hinge).
GeneralConstants certified_general(LossKind k);
/// Certified exp-type constants (exp, logistic).
ExpTypeConstants certified_exptype(LossKind k);

struct GridCheck {
  bool pass = false;
  double worst_slack = 0.0;  // min over inequalities and grid points
  double worst_z = 0.0;
  std::string worst_inequality;
  int points = 0;
};

/// g_min <= -l'(z) <= g_max and 0 <= l''(z) <= h_max on a uniform grid of [0, z0].
GridCheck verify_general_constants(LossKind k, const GeneralConstants& c, int grid_points);

/// -l'/l <= g_b and 0 <= l''/l <= h on [-R, R]; g_a <= -l'/l on [0, R].
GridCheck verify_exptype_constants(LossKind k, const ExpTypeConstants& c, double R, int grid_points);

}  // namespace esc
