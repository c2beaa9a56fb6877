#include "esc/prm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "esc/errors.hpp"
#include "esc/rng.hpp"

namespace esc {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr long long kShardPairs = 1 << 15;

double sqrt_ratio(int d) { return std::sqrt((d - 1.0) / d); }

void require_nonzero_rows(const Mat& W, const char* what) {
  for (Eigen::Index k = 0; k < W.rows(); ++k)
    if (!(W.row(k).norm() > 0.0)) throw DomainError(std::string(what) + ": zero row " + std::to_string(k));
}

Vec random_direction(CounterRng& rng, int d) {
  Vec g(d);
  double n2 = 0.0;
  do {
    for (int q = 0; q < d; ++q) g(q) = rng.normal();
    n2 = g.squaredNorm();
  } while (!(n2 > 0.0));
  return g / std::sqrt(n2);
}

// Welford accumulation of per-pair means.
struct Moments {
  long long count = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }
};

template <class F>
MonteCarloEstimate antithetic_mc(int d, long long samples, std::uint64_t seed, F&& value) {
  if (samples < 4) throw InvalidArgument("Monte-Carlo estimate needs at least 4 samples");
  const long long pairs = samples / 2;
  Moments mom;
  Vec x(d);
  for (long long start = 0, shard = 0; start < pairs; start += kShardPairs, ++shard) {
    CounterRng rng(derive_seed(seed, static_cast<std::uint64_t>(shard)), 0xAC);
    const long long stop = std::min(pairs, start + kShardPairs);
    for (long long p = start; p < stop; ++p) {
      for (int q = 0; q < d; ++q) x(q) = rng.normal();
      mom.add(0.5 * (value(x) + value(-x)));
    }
  }
  MonteCarloEstimate est;
  est.mean = mom.mean;
  est.std_error = std::sqrt(mom.m2 / static_cast<double>(mom.count - 1) / static_cast<double>(mom.count));
  est.samples = 2 * pairs;
  est.seed = seed;
  return est;
}

}  // namespace

void TeacherStudentConfig::validate() const {
  if (d < 2) throw InvalidArgument("prm: d must be at least 2");
  if (m < 1 || M < 1) throw InvalidArgument("prm: widths must be positive");
  if (!(kappa > 0.0) || kappa > 1.0) throw InvalidArgument("prm: kappa must lie in (0, 1]");
  if (!(eta >= 0.0)) throw InvalidArgument("prm: eta must be nonnegative");
  if (steps < 0) throw InvalidArgument("prm: steps must be nonnegative");
}

nlohmann::json TeacherStudentConfig::to_json() const {
  return {{"d", d}, {"m", m}, {"M", M}, {"kappa", kappa}, {"eta", eta}, {"seed", seed}, {"steps", steps}};
}

Mat teacher_weights(const TeacherStudentConfig& cfg, bool* extension) {
  cfg.validate();
  Mat V = Mat::Zero(cfg.M, cfg.d);
  const int basis = std::min(cfg.M, cfg.d);
  for (int i = 0; i < basis; ++i) V(i, i) = 1.0 / cfg.M;
  if (extension) *extension = cfg.M > cfg.d;
  if (cfg.M > cfg.d) {
    CounterRng rng(derive_seed(cfg.seed, 0x7E), 0x7E);
    for (int i = cfg.d; i < cfg.M; ++i) V.row(i) = random_direction(rng, cfg.d).transpose() / cfg.M;
  }
  return V;
}

double arccos_kernel(const Vec& w, const Vec& v) {
  const double nw = w.norm(), nv = v.norm();
  if (!(nw > 0.0) || !(nv > 0.0)) throw DomainError("arccos_kernel: zero vector");
  const double th = std::acos(std::clamp(w.dot(v) / (nw * nv), -1.0, 1.0));
  return nw * nv * (std::sin(th) + (kPi - th) * std::cos(th)) / (2.0 * kPi);
}

Vec kernel_grad_w(const Vec& w, const Vec& v) {
  const double nw = w.norm(), nv = v.norm();
  if (!(nw > 0.0) || !(nv > 0.0)) throw DomainError("kernel_grad_w: zero vector");
  if (&w == &v) return w;
  const double th = std::acos(std::clamp(w.dot(v) / (nw * nv), -1.0, 1.0));
  return nv / (2.0 * kPi) * (std::sin(th) * (w / nw) + (kPi - th) * (v / nv));
}

double population_loss(const Mat& W, const Mat& V) {
  require_nonzero_rows(W, "population_loss");
  require_nonzero_rows(V, "population_loss teacher");
  KahanSum s;
  for (Eigen::Index i = 0; i < W.rows(); ++i)
    for (Eigen::Index j = 0; j < W.rows(); ++j) s.add(0.5 * arccos_kernel(W.row(i), W.row(j)));
  for (Eigen::Index i = 0; i < W.rows(); ++i)
    for (Eigen::Index j = 0; j < V.rows(); ++j) s.add(-arccos_kernel(W.row(i), V.row(j)));
  s.add(population_loss_at_zero(V));
  return s.value();
}

double population_loss_at_zero(const Mat& V) {
  require_nonzero_rows(V, "population_loss teacher");
  KahanSum s;
  for (Eigen::Index i = 0; i < V.rows(); ++i)
    for (Eigen::Index j = 0; j < V.rows(); ++j) s.add(0.5 * arccos_kernel(V.row(i), V.row(j)));
  return s.value();
}

Mat population_grad(const Mat& W, const Mat& V) {
  require_nonzero_rows(W, "population_grad");
  Mat G(W.rows(), W.cols());
  for (Eigen::Index k = 0; k < W.rows(); ++k) {
    const Vec wk = W.row(k).transpose();
    Vec g = 0.5 * kernel_grad_w(wk, wk);
    for (Eigen::Index j = 0; j < W.rows(); ++j)
      if (j != k) g += kernel_grad_w(wk, W.row(j).transpose());
    for (Eigen::Index j = 0; j < V.rows(); ++j) g -= kernel_grad_w(wk, V.row(j).transpose());
    G.row(k) = g.transpose();
  }
  return G;
}

double prm_init_norm(const TeacherStudentConfig& cfg) {
  return static_cast<double>(cfg.d) * cfg.kappa / (static_cast<double>(cfg.m) * cfg.M) * sqrt_ratio(cfg.d);
}

StudentState init_prm(const TeacherStudentConfig& cfg) {
  cfg.validate();
  const double r = prm_init_norm(cfg);
  CounterRng rng(cfg.seed, 0xE0);
  StudentState st;
  st.W.resize(cfg.m, cfg.d);
  for (int k = 0; k < cfg.m; ++k) st.W.row(k) = r * random_direction(rng, cfg.d).transpose();
  st.norms = st.W.rowwise().norm();
  return st;
}

double prm_norm_threshold(const TeacherStudentConfig& cfg) {
  return static_cast<double>(cfg.d) / (kPi * cfg.M) * sqrt_ratio(cfg.d);
}

double prm_eta_bound(const TeacherStudentConfig& cfg) {
  const double d = cfg.d, m = cfg.m, M = cfg.M, k = cfg.kappa, s = sqrt_ratio(cfg.d);
  const double first = 2.0 * kPi * d * k * s / ((kPi + 1.0) * m * M * (1.0 + d / (kPi * M) * s));
  const double second =
      1.0 / (0.5 + m * (m - 1.0) * ((k + (1.0 / kPi - k) * s) / (2.0 * kPi * k) + 0.5) + m * m * M / (2.0 * kPi * d * k));
  return std::min(first, second);
}

long long prm_tstar(const TeacherStudentConfig& cfg) {
  const double d = cfg.d, m = cfg.m, M = cfg.M, s = sqrt_ratio(cfg.d);
  if (!(cfg.eta > 0.0)) throw InvalidArgument("prm_tstar: eta must be positive");
  const double lhs0 = d * cfg.kappa / M * s;
  const double per = cfg.eta * (kPi + 1.0) * m / (2.0 * kPi) * (1.0 + d / (kPi * M) * s);
  const double rhs = d / (kPi * M) * s;
  long long t = static_cast<long long>(std::floor((rhs - lhs0) / per)) - 1;
  // Settle rounding at the boundary with the literal condition.
  while (t >= 0 && !(lhs0 + per * static_cast<double>(t + 1) <= rhs)) --t;
  while (lhs0 + per * static_cast<double>(t + 2) <= rhs) ++t;
  return std::max(t, -1LL);
}

PrmRunRecord run_prm_gd(const TeacherStudentConfig& cfg) {
  cfg.validate();
  PrmRunRecord rec;
  rec.config = cfg;
  rec.teacher = teacher_weights(cfg, &rec.teacher_extension);
  rec.eta_compliant = cfg.eta <= prm_eta_bound(cfg);
  const double thr = prm_norm_threshold(cfg);
  const double glow = thr / 2.0;
  StudentState st = init_prm(cfg);
  std::vector<Vec> norms;
  for (long long t = 0; t <= cfg.steps; ++t) {
    const Vec nrm = st.W.rowwise().norm();
    const Mat G = population_grad(st.W, rec.teacher);
    PrmStep ps;
    ps.t = t;
    ps.loss = population_loss(st.W, rec.teacher);
    ps.sum_norms = nrm.sum();
    ps.min_norm = nrm.minCoeff();
    ps.max_norm = nrm.maxCoeff();
    ps.grad_norm = G.norm();
    rec.steps.push_back(ps);
    norms.push_back(nrm);
    if (ps.sum_norms < thr) {
      const Vec gn = G.rowwise().norm();
      for (Eigen::Index k = 0; k < gn.size(); ++k) {
        ++rec.grad_lower_checks;
        if (!(gn(k) >= glow - 0.5 * ps.sum_norms)) ++rec.grad_lower_violations;
      }
    }
    if (t < cfg.steps) st.W -= cfg.eta * G;
  }
  rec.hitting_T = -1;
  for (std::size_t s = 1; s < rec.steps.size(); ++s)
    if (rec.steps[s].sum_norms < thr) rec.hitting_T = static_cast<long long>(s) - 1;
  rec.hitting_censored = rec.steps.back().sum_norms < thr;
  for (long long t = 0; t + 1 < static_cast<long long>(norms.size()) && t <= rec.hitting_T; ++t)
    for (Eigen::Index k = 0; k < norms[t].size(); ++k) {
      ++rec.norm_growth_checks;
      const double a = norms[t](k), b = norms[t + 1](k);
      if (!(a < b && b < 2.0 * a)) ++rec.norm_growth_violations;
    }
  return rec;
}

void write_prm_csv(const PrmRunRecord& rec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << "t,loss,sum_norms,min_norm,max_norm,grad_norm\n";
  char buf[512];
  for (const auto& s : rec.steps) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.t, s.loss, s.sum_norms, s.min_norm,
                  s.max_norm, s.grad_norm);
    out << buf;
  }
}

nlohmann::json prm_summary(const PrmRunRecord& rec) {
  nlohmann::json j;
  j["config"] = rec.config.to_json();
  j["teacher_extension"] = rec.teacher_extension;
  j["eta_bound"] = prm_eta_bound(rec.config);
  j["eta_compliant"] = rec.eta_compliant;
  if (!rec.eta_compliant) j["warning"] = "eta above the admissible bound; exploratory run";
  j["tstar"] = rec.config.eta > 0.0 ? prm_tstar(rec.config) : -1;
  j["hitting_T"] = rec.hitting_T;
  j["hitting_censored"] = rec.hitting_censored;
  j["norm_growth"] = {{"checks", rec.norm_growth_checks}, {"violations", rec.norm_growth_violations}};
  j["grad_lower"] = {{"checks", rec.grad_lower_checks}, {"violations", rec.grad_lower_violations}};
  j["L_zero"] = population_loss_at_zero(rec.teacher);
  if (!rec.steps.empty()) {
    j["loss_initial"] = rec.steps.front().loss;
    j["loss_final"] = rec.steps.back().loss;
  }
  return j;
}

PrmBoundParts prm_descent_bound(const TeacherStudentConfig& cfg) {
  const double d = cfg.d, m = cfg.m, M = cfg.M, k = cfg.kappa, s = sqrt_ratio(cfg.d);
  const double r = d / M, u = 1.0 - kPi * k;
  PrmBoundParts p;
  p.first = k * u / (4.0 * kPi) * s * s * r * r;
  p.second = u * u * u / (8.0 * (kPi + 1.0) * kPi * kPi * (1.0 + d / (kPi * M * s))) * s * s * s * r * r * r;
  p.A = d * u / (2.0 * kPi * M) * s;
  p.B = cfg.eta * m * (kPi + 1.0) / (4.0 * kPi) * (1.0 + d / (kPi * M) * s);
  p.C = p.B > 0.0 ? p.A / p.B : 0.0;
  p.second_from_ABC = p.B > 0.0 ? cfg.eta * m * p.A * p.A * p.A / (4.0 * p.B) : 0.0;
  return p;
}

CertificateReport prm_descent_certificate(const TeacherStudentConfig& cfg, const PrmRunRecord& rec) {
  CertificateReport rep("prm.descent", "L(0) - L(theta(T*+1)) >= first + second term", true);
  const PrmBoundParts parts = prm_descent_bound(cfg);
  const long long ts = prm_tstar(cfg);
  const double L0 = population_loss_at_zero(rec.teacher);
  rep.extra = {{"tstar", ts},
               {"L_zero", L0},
               {"L_zero_stated", 0.5},
               {"first_term", parts.first},
               {"second_term", parts.second},
               {"second_term_from_ABC", parts.second_from_ABC},
               {"eta_compliant", rec.eta_compliant}};
  if (ts < 0 || static_cast<long long>(rec.steps.size()) <= ts + 1) {
    rep.extra["note"] = "horizon shorter than T*+1";
    rep.finalize();
    return rep;
  }
  const double LT = rec.steps[static_cast<std::size_t>(ts + 1)].loss;
  rep.record(L0 - LT, parts.total(), {{"t", ts + 1}, {"loss", LT}});
  rep.extra["descent_from_stated_L_zero"] = 0.5 - LT;
  rep.finalize();
  if (!rec.eta_compliant && rep.status == CertStatus::Fail) rep.status = CertStatus::Inconclusive;
  return rep;
}

MonteCarloEstimate mc_population_loss(const Mat& W, const Mat& V, long long samples, std::uint64_t seed) {
  return antithetic_mc(static_cast<int>(W.cols()), samples, seed, [&](const Vec& x) {
    const double f = (W * x).cwiseMax(0.0).sum();
    const double fs = (V * x).cwiseMax(0.0).sum();
    return 0.5 * (f - fs) * (f - fs);
  });
}

MonteCarloEstimate mc_kernel(const Vec& w, const Vec& v, long long samples, std::uint64_t seed) {
  return antithetic_mc(static_cast<int>(w.size()), samples, seed,
                       [&](const Vec& x) { return std::max(w.dot(x), 0.0) * std::max(v.dot(x), 0.0); });
}

}  // namespace esc
