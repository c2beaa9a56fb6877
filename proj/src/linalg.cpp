#include "esc/linalg.hpp"

#include <cmath>

#include "esc/errors.hpp"

namespace esc {

double spectral_norm_symmetric(const Mat& a) {
  if (a.rows() != a.cols()) throw InvalidArgument("spectral_norm_symmetric: matrix not square");
  if (a.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(a, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("eigensolver did not converge");
  const Vec& ev = es.eigenvalues();
  return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

double lambda_min_symmetric(const Mat& a) {
  if (a.rows() != a.cols()) throw InvalidArgument("lambda_min_symmetric: matrix not square");
  if (a.rows() == 0) throw InvalidArgument("lambda_min_symmetric: empty matrix");
  Eigen::SelfAdjointEigenSolver<Mat> es(a, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("eigensolver did not converge");
  return es.eigenvalues()(0);
}

namespace {

double power_top(const Mat& a, int max_iter, double tol) {
  const Eigen::Index n = a.rows();
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = 1.0 + 0.01 * static_cast<double>(i % 7);
  v.normalize();
  double lambda = v.dot(a * v);
  for (int it = 0; it < max_iter; ++it) {
    Vec w = a * v;
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    v = w / nw;
    const double next = v.dot(a * v);
    if (std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next))) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

}  // namespace

double lambda_min_power(const Mat& a, int max_iter, double tol) {
  if (a.rows() != a.cols() || a.rows() == 0) throw InvalidArgument("lambda_min_power: bad shape");
  // Gershgorin radius bounds the spectrum, so s*I - A is positive semidefinite.
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) s = std::max(s, a.row(i).cwiseAbs().sum());
  Mat shifted = s * Mat::Identity(a.rows(), a.cols()) - a;
  return s - power_top(shifted, max_iter, tol);
}

}  // namespace esc
