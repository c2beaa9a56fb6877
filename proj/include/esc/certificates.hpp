#pragma once

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "esc/datasets.hpp"
#include "esc/errors.hpp"
#include "esc/losses.hpp"
#include "esc/models.hpp"
#include "esc/training.hpp"

namespace esc {

/// Every symbol a bound may need. Missing fields raise on access.
struct TheoryConstants {
  std::optional<double> delta, kappa, eta;
  std::optional<int> m, n, d, B, C;
  std::optional<double> mu0, s, gamma, gamma1, gamma2, V;
  std::optional<GeneralConstants> general;
  std::optional<ExpTypeConstants> exptype;
  std::optional<double> c, c_prime, r;
  std::optional<long long> T0;

  nlohmann::json to_json() const;
};

/// Value of an optional constant, or InvalidArgument naming it.
template <class T>
T need(const std::optional<T>& v, const char* name) {
  if (!v) throw InvalidArgument(std::string("missing theory constant: ") + name);
  return *v;
}

/// Fills n, d, C, delta, m and the data-derived constants (mu0, s, gamma,
/// gamma1, gamma2, V for binary data; s for one-hot data).
TheoryConstants derive_constants(const LabeledDataset& ds, int m, double delta);

enum class CertStatus { Pass, Fail, Inconclusive, Vacuous };
std::string cert_status_name(CertStatus s);

/// Worst case over all (step, pair) evaluations of one certificate.
struct CertificateReport {
  std::string id;
  std::string source;    // statement being certified
  std::string relation;  // "measured >= bound" or "measured <= bound"
  double tolerance = 0.0;
  double theoretical = std::numeric_limits<double>::quiet_NaN();
  double measured = std::numeric_limits<double>::quiet_NaN();
  double slack = std::numeric_limits<double>::infinity();
  long long checks = 0;
  long long failures = 0;
  long long vacuous_checks = 0;
  CertStatus status = CertStatus::Pass;
  nlohmann::json context = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();

  CertificateReport() = default;
  CertificateReport(std::string id_, std::string source_, bool lower_bound, double tol = 0.0);

  bool lower() const { return relation == "measured >= bound"; }
  /// Evaluates one instance. Returns whether it respected the bound.
  bool record(double measured_value, double bound, const nlohmann::json& ctx = {});
  /// Counts an evaluation whose bound carries no information.
  void record_vacuous();
  void merge(const CertificateReport& other);
  /// Sets the status; failures under a vacuous probability budget become inconclusive.
  void finalize(double probability_budget = 0.0);
  nlohmann::json to_json() const;
};

struct CertificateSet {
  std::vector<CertificateReport> reports;

  void add(CertificateReport r) { reports.push_back(std::move(r)); }
  bool any_failed() const;
  nlohmann::json to_json() const;
  std::string summary_text() const;
};

/// n x n Gram of per-sample model gradients (binary net). Explicit
/// compensated sums, lower triangle mirrored so G is exactly symmetric.
Mat gram_matrix(const Network& net, const LabeledDataset& ds);

/// (Cn) x (Cn) Gram of per-output gradients, index i*C + alpha. Guarded by size.
Mat gram_matrix_multi(const Network& net, const LabeledDataset& ds, std::size_t max_entries = 4'000'000);

struct BlockCheck {
  bool pass = true;
  long long nonzero = 0;
  int i = -1, j = -1;
  double value = 0.0;
};
/// Every cross-class entry must be exactly 0.0.
BlockCheck check_block_structure(const Mat& G, const LabeledDataset& ds);

double gram_pair_lower_bound(double xij, int n, int m, double delta);

/// Adds every same-class pair of G to `rep`.
void check_gram_lower_bound(const Mat& G, const LabeledDataset& ds, int m, double delta, long long t,
                            CertificateReport& rep);

struct MultiGramMin {
  double value = 0.0;
  int i = -1, alpha = -1, j = -1, beta = -1;
  std::string method;
};
/// Minimum entry of the (Cn) x (Cn) Gram without materializing it.
MultiGramMin multi_gram_min(const Network& net, const LabeledDataset& ds,
                            double max_flops = 5e9);
/// Same, with preactivations P and K = X X^T + 1 supplied by the caller.
MultiGramMin multi_gram_min(const Network& net, const LabeledDataset& ds, const Mat& P, const Mat& K,
                            double max_flops = 5e9);

struct BoundValue {
  double value = 0.0;
  bool vacuous = false;
};

/// (1/2 + 2 sqrt(log(2n^2/delta)/m)) * 251001/10^6 * ((1+2eta)^{2t} - (1-2eta)^{2t}).
double varphi_early(long long t, double eta, int n, int m, double delta);
/// 251001/1500000 * ((1+2eta)^{2t} - (1-2eta)^{2t}).
double phi_a9(long long t, double eta);

BoundValue gradient_lower_bound_early(long long t, double eta, int n, int m, double delta, double gamma1,
                                      double gamma2);
/// Lower bound on the squared gradient norm: V L^2.
BoundValue gradient_lower_bound_global(double L, double V);

/// <grad L(theta), batch gradient>.
double stochastic_inner_product(const Network& net, const LabeledDataset& ds, LossKind loss,
                                const std::vector<int>& batch);

enum class HessianRegime { EarlyBinary, MultiClass, Global, InputOnly };
std::string hessian_regime_name(HessianRegime r);
double hessian_bound(HessianRegime regime, const Network& net, double loss_value);
/// Spectral norm of the dense Hessian against the regime bound at one point.
void check_hessian_bound(const Network& net, const LabeledDataset& ds, LossKind loss, HessianRegime regime,
                         long long t, CertificateReport& rep, std::size_t max_params = 4000);

double descent_bound_theorem1(double gamma1, double gamma2, int n, int m, double delta);
double descent_bound_theorem2();
/// Closed geometric-sum form of sum_{t=1}^{T*-1} eta (1 - phi(t))^2.
double lemma_a9_sum(double eta, long long Tstar);
double lemma_a9_bruteforce(double eta, long long Tstar);

struct RateKind {
  enum class Kind { PolyStage1, Exponential };
  Kind kind = Kind::Exponential;
  double V = 0.0;
  double c = 0.0;
};
/// Checks L(t) against the envelope at every recorded t >= 1 and reports a
/// least-squares fitted rate.
CertificateReport fit_convergence_rate(const RunRecord& record, const RateKind& kind);

enum class BudgetRegime { Binary, Multi };
/// Failure probability the theorem leaves: binary delta + 2m e^{-2d};
/// multi delta + 4m e^{-(d+1)/2} + m 0.17^B.
double probability_budget(BudgetRegime regime, double delta, int m, int d, int B = 0);

}  // namespace esc
