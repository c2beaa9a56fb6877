#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "esc/certificates.hpp"
#include "esc/linalg.hpp"

namespace esc {

/// Student of width m learning a teacher of width M under Gaussian inputs.
struct TeacherStudentConfig {
  int d = 10;
  int m = 10;
  int M = 10;
  double kappa = 0.1;
  double eta = 0.0;
  std::uint64_t seed = 0;
  long long steps = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

/// M x d teacher rows: e_i / M for i < min(M, d); any rows beyond d are
/// placed uniformly at random on the (1/M)-sphere and `extension` is set.
Mat teacher_weights(const TeacherStudentConfig& cfg, bool* extension = nullptr);

struct StudentState {
  Mat W;  // m x d, row k = w_k
  long long step = 0;
  double loss = 0.0;
  Vec norms;
};

/// (1/2pi) |w| |v| (sin th + (pi - th) cos th).
double arccos_kernel(const Vec& w, const Vec& v);
/// Derivative of k(w; v) in w. Passing the same object twice selects the
/// self branch, which returns w.
Vec kernel_grad_w(const Vec& w, const Vec& v);

double population_loss(const Mat& W, const Mat& V);
Mat population_grad(const Mat& W, const Mat& V);
/// Teacher-only terms: 1/2 sum_ij k(v_i; v_j).
double population_loss_at_zero(const Mat& V);

double prm_init_norm(const TeacherStudentConfig& cfg);
StudentState init_prm(const TeacherStudentConfig& cfg);

/// Threshold (d / (pi M)) sqrt((d-1)/d) on the sum of student norms.
double prm_norm_threshold(const TeacherStudentConfig& cfg);
double prm_eta_bound(const TeacherStudentConfig& cfg);
/// Largest t >= 0 meeting the step-count condition; -1 when none does.
long long prm_tstar(const TeacherStudentConfig& cfg);

struct PrmStep {
  long long t = 0;
  double loss = 0.0;
  double sum_norms = 0.0;
  double min_norm = 0.0;
  double max_norm = 0.0;
  double grad_norm = 0.0;
};

struct PrmRunRecord {
  TeacherStudentConfig config;
  Mat teacher;
  bool teacher_extension = false;
  bool eta_compliant = true;
  std::vector<PrmStep> steps;
  long long hitting_T = -1;
  bool hitting_censored = false;
  long long norm_growth_checks = 0;
  long long norm_growth_violations = 0;
  long long grad_lower_checks = 0;
  long long grad_lower_violations = 0;
};

PrmRunRecord run_prm_gd(const TeacherStudentConfig& cfg);
void write_prm_csv(const PrmRunRecord& rec, const std::string& path);
nlohmann::json prm_summary(const PrmRunRecord& rec);

struct PrmBoundParts {
  double first = 0.0;   // kappa (1 - pi kappa)/(4 pi) ((d-1)/d) (d/M)^2
  double second = 0.0;  // cubic term as printed
  double A = 0.0, B = 0.0, C = 0.0;
  double second_from_ABC = 0.0;  // eta m A^3 / (4 B)
  double total() const { return first + second; }
};
PrmBoundParts prm_descent_bound(const TeacherStudentConfig& cfg);

/// Compares L(0) - L(theta(T*+1)) with the bound; L(0) is the closed-form
/// teacher-only loss.
CertificateReport prm_descent_certificate(const TeacherStudentConfig& cfg, const PrmRunRecord& rec);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long long samples = 0;
  std::uint64_t seed = 0;
};
/// Antithetic pairs (x, -x), x ~ N(0, I).
MonteCarloEstimate mc_population_loss(const Mat& W, const Mat& V, long long samples, std::uint64_t seed);
MonteCarloEstimate mc_kernel(const Vec& w, const Vec& v, long long samples, std::uint64_t seed);

}  // namespace esc
