#pragma once

#include <Eigen/Dense>
#include <cstddef>

namespace esc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Kahan-compensated accumulator.
struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    const double y = x - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

/// Largest absolute eigenvalue of a symmetric matrix (full eigensolve).
double spectral_norm_symmetric(const Mat& a);

/// Smallest eigenvalue of a symmetric matrix (full eigensolve).
double lambda_min_symmetric(const Mat& a);

/// Smallest eigenvalue by power iteration on the shifted matrix s*I - A.
/// Independent of the eigensolver; used as an oracle in tests.
double lambda_min_power(const Mat& a, int max_iter = 200000, double tol = 1e-15);

}  // namespace esc
