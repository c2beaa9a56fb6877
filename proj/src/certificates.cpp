#include "esc/certificates.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "esc/errors.hpp"

namespace esc {

nlohmann::json TheoryConstants::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  auto put = [&](const char* k, const auto& v) {
    if (v) j[k] = *v;
  };
  put("delta", delta);
  put("kappa", kappa);
  put("eta", eta);
  put("m", m);
  put("n", n);
  put("d", d);
  put("B", B);
  put("C", C);
  put("mu0", mu0);
  put("s", s);
  put("gamma", gamma);
  put("gamma1", gamma1);
  put("gamma2", gamma2);
  put("V", V);
  put("c", c);
  put("c_prime", c_prime);
  put("r", r);
  put("T0", T0);
  if (general)
    j["general"] = {{"z0", general->z0}, {"g_min", general->g_min}, {"g_max", general->g_max}, {"h_max", general->h_max}};
  if (exptype) j["exptype"] = {{"g_a", exptype->g_a}, {"g_b", exptype->g_b}, {"h", exptype->h}};
  return j;
}

TheoryConstants derive_constants(const LabeledDataset& ds, int m, double delta) {
  TheoryConstants tc;
  tc.n = ds.n();
  tc.d = ds.d();
  tc.C = ds.num_classes;
  tc.m = m;
  tc.delta = delta;
  if (ds.kind == LabelKind::Binary) {
    const SeparabilityReport sep = validate_separable(ds);
    if (sep.mu0) tc.mu0 = *sep.mu0;
    tc.s = sep.s;
    tc.gamma = sep.gamma;
    const GammaConstants g = compute_gamma_constants(ds);
    tc.gamma1 = g.gamma1;
    tc.gamma2 = g.gamma2;
    tc.V = compute_V(ds, m, delta).V;
  } else {
    tc.s = validate_concentrated(ds).s;
  }
  return tc;
}

std::string cert_status_name(CertStatus s) {
  switch (s) {
    case CertStatus::Pass: return "pass";
    case CertStatus::Fail: return "fail";
    case CertStatus::Inconclusive: return "inconclusive";
    case CertStatus::Vacuous: return "vacuous";
  }
  return "?";
}

CertificateReport::CertificateReport(std::string id_, std::string source_, bool lower_bound, double tol)
    : id(std::move(id_)),
      source(std::move(source_)),
      relation(lower_bound ? "measured >= bound" : "measured <= bound"),
      tolerance(tol) {}

bool CertificateReport::record(double measured_value, double bound, const nlohmann::json& ctx) {
  ++checks;
  const double sl = lower() ? measured_value - bound : bound - measured_value;
  const bool ok = !std::isnan(sl) && sl >= -tolerance;
  if (!ok) ++failures;
  const bool worse = std::isnan(sl) ? !std::isnan(slack) : sl < slack;
  if (worse) {
    slack = sl;
    measured = measured_value;
    theoretical = bound;
    context = ctx.is_null() ? nlohmann::json::object() : ctx;
  }
  return ok;
}

void CertificateReport::record_vacuous() {
  ++checks;
  ++vacuous_checks;
}

void CertificateReport::merge(const CertificateReport& o) {
  const bool take = std::isnan(o.slack) ? !std::isnan(slack) : o.slack < slack;
  checks += o.checks;
  failures += o.failures;
  vacuous_checks += o.vacuous_checks;
  if (take) {
    slack = o.slack;
    measured = o.measured;
    theoretical = o.theoretical;
    context = o.context;
  }
}

void CertificateReport::finalize(double probability_budget) {
  if (checks == 0) status = CertStatus::Inconclusive;
  else if (failures > 0) status = probability_budget > 1.0 ? CertStatus::Inconclusive : CertStatus::Fail;
  else if (vacuous_checks == checks) status = CertStatus::Vacuous;
  else status = CertStatus::Pass;
}

nlohmann::json CertificateReport::to_json() const {
  nlohmann::json j;
  j["id"] = id;
  j["source"] = source;
  j["relation"] = relation;
  j["tolerance"] = tolerance;
  j["theoretical"] = theoretical;
  j["measured"] = measured;
  j["slack"] = slack;
  j["checks"] = checks;
  j["failures"] = failures;
  j["vacuous_checks"] = vacuous_checks;
  j["status"] = cert_status_name(status);
  j["context"] = context;
  if (!extra.empty()) j["extra"] = extra;
  return j;
}

bool CertificateSet::any_failed() const {
  return std::any_of(reports.begin(), reports.end(), [](const auto& r) { return r.status == CertStatus::Fail; });
}

nlohmann::json CertificateSet::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& r : reports) {
    std::string key = r.id;
    for (int q = 2; j.contains(key); ++q) key = r.id + "#" + std::to_string(q);
    j[key] = r.to_json();
  }
  return j;
}

std::string CertificateSet::summary_text() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-40s %-13s %10s %9s %14s\n", "certificate", "status", "checks", "failures",
                "worst slack");
  out << line;
  long long passed = 0;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-40s %-13s %10lld %9lld %14.6g\n", r.id.c_str(),
                  cert_status_name(r.status).c_str(), r.checks, r.failures, r.slack);
    out << line;
    if (r.status == CertStatus::Pass) ++passed;
  }
  out << passed << " of " << reports.size() << " certificates pass\n";
  return out.str();
}

Mat gram_matrix(const Network& net, const LabeledDataset& ds) {
  if (net.variant != Variant::Binary) throw WrongVariant("gram_matrix: use gram_matrix_multi for the multi-class net");
  const Mat P = preactivations(net, ds.X);
  const int n = ds.n(), m = net.m(), d = ds.d();
  Mat G(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      KahanSum xs;
      for (int q = 0; q < d; ++q) xs.add(ds.X(i, q) * ds.X(j, q));
      const double xij = xs.value();
      KahanSum acc;
      for (int k = 0; k < m; ++k) {
        if (!(P(i, k) > 0.0) || !(P(j, k) > 0.0)) continue;
        const double a = net.A(k, 0);
        acc.add(P(i, k) * P(j, k));
        acc.add(a * a * xij);
      }
      G(i, j) = acc.value();
      G(j, i) = acc.value();
    }
  return G;
}

Mat gram_matrix_multi(const Network& net, const LabeledDataset& ds, std::size_t max_entries) {
  if (net.variant != Variant::Multi) throw WrongVariant("gram_matrix_multi: multi-class net expected");
  const int n = ds.n(), m = net.m(), C = net.outputs();
  const std::size_t N = static_cast<std::size_t>(n) * C;
  if (N * N > max_entries) throw SizeGuard("gram_matrix_multi: (Cn)^2 exceeds the entry guard");
  const Mat P = preactivations(net, ds.X);
  Mat G(N, N);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      KahanSum xs;
      for (int q = 0; q < ds.d(); ++q) xs.add(ds.X(i, q) * ds.X(j, q));
      const double kij = xs.value() + 1.0;
      for (int a = 0; a < C; ++a)
        for (int b = 0; b < C; ++b) {
          KahanSum acc;
          for (int k = 0; k < m; ++k) {
            if (!(P(i, k) > 0.0) || !(P(j, k) > 0.0)) continue;
            if (a == b) acc.add(P(i, k) * P(j, k));
            acc.add(net.A(k, a) * net.A(k, b) * kij);
          }
          G(i * C + a, j * C + b) = acc.value();
          G(j * C + b, i * C + a) = acc.value();
        }
    }
  return G;
}

BlockCheck check_block_structure(const Mat& G, const LabeledDataset& ds) {
  BlockCheck bc;
  for (int i = 0; i < ds.n(); ++i)
    for (int j = 0; j < ds.n(); ++j) {
      if (ds.labels[i] == ds.labels[j] || G(i, j) == 0.0) continue;
      if (bc.pass) {
        bc.i = i;
        bc.j = j;
        bc.value = G(i, j);
      }
      bc.pass = false;
      ++bc.nonzero;
    }
  return bc;
}

double gram_pair_lower_bound(double xij, int n, int m, double delta) {
  const double c = std::clamp(xij, -1.0, 1.0);
  return 0.999 * xij *
         ((std::numbers::pi - std::acos(c)) / std::numbers::pi -
          std::sqrt(8.0 * std::log(static_cast<double>(n) * n / delta) / m));
}

void check_gram_lower_bound(const Mat& G, const LabeledDataset& ds, int m, double delta, long long t,
                            CertificateReport& rep) {
  for (int i = 0; i < ds.n(); ++i)
    for (int j = 0; j < ds.n(); ++j) {
      if (ds.labels[i] != ds.labels[j]) continue;
      const double bound = gram_pair_lower_bound(ds.X.row(i).dot(ds.X.row(j)), ds.n(), m, delta);
      rep.record(G(i, j), bound, {{"t", t}, {"i", i}, {"j", j}});
    }
}

MultiGramMin multi_gram_min(const Network& net, const LabeledDataset& ds, double max_flops) {
  if (net.variant != Variant::Multi) throw WrongVariant("multi_gram_min: multi-class net expected");
  const Mat K = (ds.X * ds.X.transpose()).array() + 1.0;
  return multi_gram_min(net, ds, preactivations(net, ds.X), K, max_flops);
}

MultiGramMin multi_gram_min(const Network& net, const LabeledDataset& ds, const Mat& P, const Mat& K,
                            double max_flops) {
  if (net.variant != Variant::Multi) throw WrongVariant("multi_gram_min: multi-class net expected");
  const int n = ds.n(), C = net.outputs();
  MultiGramMin best;
  best.value = std::numeric_limits<double>::infinity();
  auto offer = [&](double v, int i, int a, int j, int b) {
    if (v < best.value) best = {v, i, a, j, b, best.method};
  };
  if ((P.array() > 0.0).all()) {
    best.method = "all-active";
    const Mat SS = P * P.transpose();
    const Mat AtA = net.A.transpose() * net.A;
    int dmin = 0, dmax = 0;
    for (int a = 1; a < C; ++a) {
      if (AtA(a, a) < AtA(dmin, dmin)) dmin = a;
      if (AtA(a, a) > AtA(dmax, dmax)) dmax = a;
    }
    int omin_a = -1, omin_b = -1, omax_a = -1, omax_b = -1;
    for (int a = 0; a < C; ++a)
      for (int b = 0; b < C; ++b) {
        if (a == b) continue;
        if (omin_a < 0 || AtA(a, b) < AtA(omin_a, omin_b)) omin_a = a, omin_b = b;
        if (omax_a < 0 || AtA(a, b) > AtA(omax_a, omax_b)) omax_a = a, omax_b = b;
      }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double k = K(i, j);
        const int da = k >= 0.0 ? dmin : dmax;
        offer(SS(i, j) + k * AtA(da, da), i, da, j, da);
        if (C >= 2) {
          const int oa = k >= 0.0 ? omin_a : omax_a, ob = k >= 0.0 ? omin_b : omax_b;
          offer(k * AtA(oa, ob), i, oa, j, ob);
        }
      }
    return best;
  }
  best.method = "explicit";
  const double flops = static_cast<double>(n) * n * net.m() * C * (C + 1) / 2.0;
  if (flops > max_flops) throw SizeGuard("multi_gram_min: explicit evaluation exceeds the flop guard");
  const Mat Ind = (P.array() > 0.0).cast<double>().matrix();
  Mat S = P.cwiseMax(0.0);
  const Mat SS = S * S.transpose();
  for (int a = 0; a < C; ++a) {
    const Mat La = Ind * net.A.col(a).asDiagonal();
    for (int b = a; b < C; ++b) {
      const Mat Lb = Ind * net.A.col(b).asDiagonal();
      Mat M = (La * Lb.transpose()).cwiseProduct(K);
      if (a == b) M += SS;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) offer(M(i, j), i, a, j, b);
    }
  }
  return best;
}

double varphi_early(long long t, double eta, int n, int m, double delta) {
  const double pre = 0.5 + 2.0 * std::sqrt(std::log(2.0 * n * n / delta) / m);
  const double e = 2.0 * static_cast<double>(t);
  return pre * 251001.0 / 1000000.0 * (std::pow(1.0 + 2.0 * eta, e) - std::pow(1.0 - 2.0 * eta, e));
}

double phi_a9(long long t, double eta) {
  const double e = 2.0 * static_cast<double>(t);
  return 251001.0 / 1500000.0 * (std::pow(1.0 + 2.0 * eta, e) - std::pow(1.0 - 2.0 * eta, e));
}

BoundValue gradient_lower_bound_early(long long t, double eta, int n, int m, double delta, double gamma1,
                                      double gamma2) {
  const double vp = varphi_early(t, eta, n, m, delta);
  const double g = gamma1 - gamma2 * std::sqrt(8.0 * std::log(static_cast<double>(n) * n / delta) / m);
  BoundValue b;
  b.value = 0.999 * (1.0 - vp) * (1.0 - vp) * g;
  b.vacuous = vp >= 1.0 || b.value <= 0.0;
  return b;
}

BoundValue gradient_lower_bound_global(double L, double V) {
  BoundValue b;
  b.value = V * L * L;
  b.vacuous = !(V > 0.0);
  return b;
}

double stochastic_inner_product(const Network& net, const LabeledDataset& ds, LossKind loss,
                                const std::vector<int>& batch) {
  const Vec full = grad_loss(net, ds, loss, all_indices(ds.n()));
  const Vec part = grad_loss(net, ds, loss, batch);
  return full.dot(part);
}

std::string hessian_regime_name(HessianRegime r) {
  switch (r) {
    case HessianRegime::EarlyBinary: return "early-binary";
    case HessianRegime::MultiClass: return "multi-class";
    case HessianRegime::Global: return "global";
    case HessianRegime::InputOnly: return "input-only";
  }
  return "?";
}

double hessian_bound(HessianRegime regime, const Network& net, double loss_value) {
  const double m = net.m();
  switch (regime) {
    case HessianRegime::EarlyBinary: return 7.0 / (2.0 * m) + 2.0;
    case HessianRegime::MultiClass: return 25.0 / (4.0 * m) + 2.0 * std::numbers::sqrt2;
    case HessianRegime::Global: {
      const double th = param_norm(net);
      return (th * th + 1.0) * loss_value;
    }
    case HessianRegime::InputOnly: return loss_value;
  }
  return 0.0;
}

void check_hessian_bound(const Network& net, const LabeledDataset& ds, LossKind loss, HessianRegime regime,
                         long long t, CertificateReport& rep, std::size_t max_params) {
  const Layers layers = regime == HessianRegime::InputOnly ? Layers::InputOnly : Layers::All;
  const Mat H = hessian_loss(net, ds, loss, layers, max_params);
  const double norm = spectral_norm_symmetric(H);
  const double L = empirical_loss(net, ds, loss);
  rep.record(norm, hessian_bound(regime, net, L),
             {{"t", t}, {"loss", L}, {"regime", hessian_regime_name(regime)}, {"params", H.rows()}});
}

double descent_bound_theorem1(double gamma1, double gamma2, int n, int m, double delta) {
  return 0.193 * (gamma1 - gamma2 * std::sqrt(8.0 * std::log(static_cast<double>(n) * n / delta) / m)) - 0.0111;
}

double descent_bound_theorem2() {
  const double eta = 0.01;
  const long long T = tstar(eta, Variant::Multi);
  return (9801.0 / 10000.0 - 11.0 / 100.0) * eta * static_cast<double>(T - 1) - 2.46 * eta;
}

double lemma_a9_sum(double eta, long long Tstar) {
  const double a = 251001.0 / 1500000.0;
  const double p = 1.0 + 2.0 * eta, q = 1.0 - 2.0 * eta, r = 1.0 - 4.0 * eta * eta;
  const double T = static_cast<double>(Tstar);
  auto S = [&](double x) { return (x - std::pow(x, T)) / (1.0 - x); };
  return eta * ((T - 1.0) - 2.0 * a * S(p * p) + 2.0 * a * S(q * q) +
                a * a * (S(std::pow(p, 4)) + S(std::pow(q, 4)) - 2.0 * S(r * r)));
}

double lemma_a9_bruteforce(double eta, long long Tstar) {
  KahanSum s;
  for (long long t = 1; t <= Tstar - 1; ++t) {
    const double f = 1.0 - phi_a9(t, eta);
    s.add(eta * f * f);
  }
  return s.value();
}

CertificateReport fit_convergence_rate(const RunRecord& record, const RateKind& kind) {
  const bool expo = kind.kind == RateKind::Kind::Exponential;
  CertificateReport rep(expo ? "rate.exponential" : "rate.poly_stage1",
                        expo ? "L(t) <= (1 - V c / 2)^(t-1) L(1)" : "L(t) <= L(1) / t^(V c / 2)", false);
  const StepRecord* first = nullptr;
  for (const auto& s : record.steps)
    if (s.t == 1) first = &s;
  if (!first) {
    rep.finalize();
    rep.extra["note"] = "no record at t = 1";
    return rep;
  }
  const double L1 = first->loss;
  rep.tolerance = 1e-12 * L1;
  const double rate = kind.V * kind.c / 2.0;
  double sxy = 0.0, sxx = 0.0;
  for (const auto& s : record.steps) {
    if (s.t < 1) continue;
    const double tt = static_cast<double>(s.t);
    const double env = expo ? std::pow(1.0 - rate, tt - 1.0) * L1 : L1 / std::pow(tt, rate);
    rep.record(s.loss, env, {{"t", s.t}, {"loss", s.loss}});
    if (s.t > 1 && s.loss > 0.0) {
      const double x = expo ? tt - 1.0 : std::log(tt);
      sxy += x * (std::log(s.loss) - std::log(L1));
      sxx += x * x;
    }
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  if (expo) {
    rep.extra["certified_ratio"] = 1.0 - rate;
    rep.extra["fitted_ratio"] = std::exp(slope);
  } else {
    rep.extra["certified_exponent"] = rate;
    rep.extra["fitted_exponent"] = -slope;
  }
  rep.extra["V"] = kind.V;
  rep.extra["c"] = kind.c;
  rep.finalize();
  return rep;
}

double probability_budget(BudgetRegime regime, double delta, int m, int d, int B) {
  if (regime == BudgetRegime::Binary) return delta + 2.0 * m * std::exp(-2.0 * d);
  if (B <= 0) throw InvalidArgument("probability_budget: batch size required for the multi-class regime");
  return delta + 4.0 * m * std::exp(-(d + 1.0) / 2.0) + m * std::pow(0.17, B);
}

}  // namespace esc
