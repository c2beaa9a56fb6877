#include "esc/cli/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <climits>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numbers>
#include <thread>

#include "esc/digest.hpp"
#include "esc/errors.hpp"
#include "esc/rng.hpp"

namespace esc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDataLabel = 0xDA7A;
constexpr std::uint64_t kModelLabel = 0x30DE1;
constexpr std::uint64_t kBatchLabel = 0xBA7C;
constexpr std::uint64_t kPrmLabel = 0x9E1;

constexpr double kA9Reference = 0.19659127915806962;
constexpr double kDescentConstant = 0.262533;

std::string bundled(const std::string& name) { return std::string(ESC_DATA_DIR) + "/mnist/" + name; }

bool is_global(const std::string& kind) { return kind == "global-exp" || kind == "global-poly"; }

// Per-step reports, merged once the hitting time is known.
struct PerStep {
  std::string id, source;
  bool lower = true;
  double tol = 0.0;
  std::vector<std::pair<long long, CertificateReport>> items;

  PerStep(std::string id_, std::string source_, bool lower_, double tol_ = 0.0)
      : id(std::move(id_)), source(std::move(source_)), lower(lower_), tol(tol_) {}

  CertificateReport& at(long long t) {
    items.emplace_back(t, CertificateReport(id, source, lower, tol));
    return items.back().second;
  }
  CertificateReport merged(long long limit) const {
    CertificateReport r(id, source, lower, tol);
    long long excluded = 0;
    for (const auto& [t, rep] : items) {
      if (t <= limit) r.merge(rep);
      else ++excluded;
    }
    if (excluded > 0) r.extra["excluded_beyond_T"] = excluded;
    return r;
  }
};

void settle(CertificateReport& r, double budget, const std::vector<std::string>& range_notes,
            const std::string& premise_failure = "") {
  r.finalize(budget);
  r.extra["probability_budget"] = budget;
  if (budget > 1.0) r.extra["note"] = "probability budget exceeds 1; failures are inconclusive";
  if (r.status == CertStatus::Fail && !premise_failure.empty()) {
    r.status = CertStatus::Inconclusive;
    r.extra["inconclusive_reason"] = premise_failure;
  } else if (r.status == CertStatus::Fail && !range_notes.empty()) {
    r.status = CertStatus::Inconclusive;
    r.extra["inconclusive_reason"] = "parameters outside the theorem's range";
  }
}

std::vector<long long> sample_points(long long lo, long long hi, int k) {
  std::vector<long long> pts;
  if (k <= 0 || hi < lo) return pts;
  if (k == 1) return {lo};
  for (int j = 0; j < k; ++j)
    pts.push_back(lo + static_cast<long long>(std::llround(static_cast<double>(j) * (hi - lo) / (k - 1))));
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

const StepRecord* step_at(const RunRecord& rec, long long t) {
  for (const auto& s : rec.steps)
    if (s.t == t) return &s;
  return nullptr;
}

void push_counts(ExperimentResult& res, const PartitionSnapshot& p, bool keep_table) {
  for (int i = 0; i < p.n; ++i) res.partition_counts.push_back({p.t, i, p.counts(i)});
  if (keep_table) res.partition_tables.push_back(p);
}

void hessian_point(const Network& net, const LabeledDataset& ds, LossKind loss, HessianRegime regime, long long t,
                   PerStep& ps, int max_params, json& notes) {
  try {
    check_hessian_bound(net, ds, loss, regime, t, ps.at(t), static_cast<std::size_t>(max_params));
  } catch (const SizeGuard& e) {
    ps.items.pop_back();
    notes.push_back("hessian at t=" + std::to_string(t) + " skipped: " + e.what());
  }
}

CertificateReport hitting_cert(const HittingTime& T, long long Ts, const std::string& source) {
  CertificateReport r("hitting_time.tstar", source, true);
  if (!T.censored || T.T + 1 >= Ts) r.record(static_cast<double>(T.T + 1), static_cast<double>(Ts),
                                             {{"T", T.T}, {"censored", T.censored}});
  else r.extra["note"] = "horizon too short to observe T + 1 >= T*";
  return r;
}

CertificateReport count_cert(const std::string& id, const std::string& source, long long violations,
                             const json& ctx) {
  CertificateReport r(id, source, false);
  r.record(static_cast<double>(violations), 0.0, ctx);
  return r;
}

long long limit_of(const HittingTime& T) { return T.censored ? LLONG_MAX : T.T; }

void run_early_binary(const ExperimentConfig& cfg, const PreparedRun& pr, ExperimentResult& res) {
  const auto& ds = pr.ds;
  const double eta = cfg.schedule->eta, delta = *cfg.delta;
  const int n = ds.n(), m = pr.net0.m();
  const long long Ts = tstar(eta, Variant::Binary);
  const double budget = probability_budget(BudgetRegime::Binary, delta, m, ds.d());
  const double g1 = need(pr.constants.gamma1, "gamma1"), g2 = need(pr.constants.gamma2, "gamma2");

  EarlyDynamicsChecker chk(ds, Variant::Binary, Ts);
  PerStep block("gram.block_structure", "cross-class Gram entries are exactly 0 for 1 <= t <= T", false);
  PerStep lower("gram.lower_bound",
                "G_ij >= (999/1000) x_i^T x_j ((pi - arccos(x_i^T x_j))/pi - sqrt(8 log(n^2/delta)/m)), same class",
                true);
  PerStep grad("gradient.lower_bound_early",
               "|grad L|^2 >= (999/1000)(1 - varphi(t))^2 (gamma1 - gamma2 sqrt(8 log(n^2/delta)/m))", true);
  PerStep hess("hessian.early_binary", "|Hessian L| <= 7/(2m) + 2 <= 3", false);
  const auto hpts = sample_points(0, std::min(Ts, cfg.train.steps), cfg.checks.hessian_points);
  json notes = json::array();
  const std::vector<int> full = all_indices(n);

  RunRecord rec = run(pr.net0, ds, pr.loss, pr.schedule, pr.train, [&](const StepContext& sc) {
    const Network& net = *sc.net;
    chk.observe(net, sc.t);
    push_counts(res, chk.last(), cfg.checks.partition_dump);
    if (cfg.checks.gram && sc.t >= 1 && sc.t <= Ts) {
      const Mat G = gram_matrix(net, ds);
      const BlockCheck bc = check_block_structure(G, ds);
      block.at(sc.t).record(static_cast<double>(bc.nonzero), 0.0,
                            {{"t", sc.t}, {"i", bc.i}, {"j", bc.j}, {"value", bc.value}});
      check_gram_lower_bound(G, ds, m, delta, sc.t, lower.at(sc.t));
    }
    if (sc.has_step && sc.t >= 1 && sc.t <= Ts - 1) {
      const Vec g = pr.train.batching.kind == Batching::Kind::Full ? *sc.grad : grad_loss(net, ds, pr.loss, full);
      const BoundValue b = gradient_lower_bound_early(sc.t, eta, n, m, delta, g1, g2);
      auto& r = grad.at(sc.t);
      if (b.vacuous) r.record_vacuous();
      else r.record(g.squaredNorm(), b.value, {{"t", sc.t}});
    }
    if (std::binary_search(hpts.begin(), hpts.end(), sc.t))
      hessian_point(net, ds, pr.loss, HessianRegime::EarlyBinary, sc.t, hess, cfg.checks.hessian_max_params, notes);
  });

  const HittingTime T = rec.measured_T;
  const long long lim = limit_of(T);
  const auto& rn = pr.range_notes;

  CertificateReport hit = hitting_cert(T, Ts, "T + 1 >= T* = floor(log 6 / (4 eta))");
  settle(hit, budget, rn);
  res.certs.add(hit);

  const InitialPartitionStats ips = initial_partition_stats(pr.net0, ds, delta);
  CertificateReport init("partition.initial",
                         "|card(TL_i(0) ∩ TL_j(0))/m - (pi - arccos x_i^T x_j)/(4 pi)| <= sqrt(log(n^2/delta)/(2m)) and siblings",
                         false);
  for (const auto& s : ips.stats)
    init.record(s.max_deviation, ips.bound, {{"intersection", s.name}, {"i", s.worst_i}, {"j", s.worst_j}});
  settle(init, budget, rn);
  res.certs.add(init);

  const DynamicsResult dyn = chk.result();
  CertificateReport dr("partition.dynamics_early", "rules S1-S5 hold for 0 <= t <= T*", false);
  if (dyn.status != "insufficient-horizon") dr.record(static_cast<double>(dyn.total_violations()), 0.0, dyn.to_json());
  settle(dr, budget, rn);
  res.certs.add(dr);

  for (PerStep* ps : {&block, &lower, &grad, &hess}) {
    if (ps->items.empty()) continue;
    CertificateReport r = ps->merged(lim);
    settle(r, budget, rn);
    res.certs.add(r);
  }

  CertificateReport desc("descent.theorem1",
                         "L(theta(0)) - L(theta(T*)) >= 0.193 (gamma1 - gamma2 sqrt(8 log(n^2/delta)/m)) - 0.0111", true);
  const double bound1 = descent_bound_theorem1(g1, g2, n, m, delta);
  const StepRecord* sT = step_at(rec, Ts);
  double descent = std::numeric_limits<double>::quiet_NaN();
  if (sT) {
    descent = rec.steps.front().loss - sT->loss;
    desc.record(descent, bound1, {{"t", Ts}});
  } else {
    desc.extra["note"] = "no record at t = T*";
  }
  settle(desc, budget, rn, pr.loss == LossKind::Quadratic ? "" : "the descent bound is stated for the quadratic loss");
  res.certs.add(desc);

  res.summary = run_summary(rec);
  res.summary["tstar"] = Ts;
  res.summary["Te"] = exp_hitting_time_Te(eta, n, m, delta, Variant::Binary);
  res.summary["descent_at_tstar"] = descent;
  res.summary["descent_bound"] = bound1;
  res.summary["probability_budget"] = budget;
  res.summary["dynamics"] = dyn.to_json();
  if (!notes.empty()) res.summary["notes"] = notes;
  res.record = std::move(rec);
}

void run_early_multi(const ExperimentConfig& cfg, const PreparedRun& pr, ExperimentResult& res) {
  const auto& ds = pr.ds;
  const double eta = cfg.schedule->eta, delta = *cfg.delta;
  const int n = ds.n(), m = pr.net0.m();
  const long long Ts = tstar(eta, Variant::Multi);
  const int B = pr.train.batching.kind == Batching::Kind::Full ? n : pr.train.batching.B;
  const double budget = probability_budget(BudgetRegime::Multi, delta, m, ds.d(), B);
  const GeneralConstants gc = certified_general(pr.loss);

  EarlyDynamicsChecker chk(ds, Variant::Multi, Ts);
  PerStep gram("gram.multi_min", "every entry of the Cn x Cn Gram >= 1 for 1 <= t <= T", true);
  PerStep inner("sgd.inner_product", "<grad L(theta(t)), batch gradient> >= 9801/10000 for 1 <= t <= T", true);
  PerStep hess("hessian.multi_class", "|Hessian L| <= 25/(4m) + 2 sqrt 2 <= 4", false);
  const auto hpts = sample_points(0, std::min(Ts, cfg.train.steps), cfg.checks.hessian_points);
  json notes = json::array();
  const std::vector<int> full = all_indices(n);
  const Mat K = (ds.X * ds.X.transpose()).array() + 1.0;

  RunRecord rec = run(pr.net0, ds, pr.loss, pr.schedule, pr.train, [&](const StepContext& sc) {
    const Network& net = *sc.net;
    const Mat P = preactivations(net, ds.X);
    chk.observe(net, P, sc.t);
    push_counts(res, chk.last(), cfg.checks.partition_dump);
    if (cfg.checks.gram && sc.t >= 1 && sc.t <= Ts) {
      try {
        const MultiGramMin g = multi_gram_min(net, ds, P, K);
        gram.at(sc.t).record(g.value, 1.0,
                             {{"t", sc.t}, {"i", g.i}, {"alpha", g.alpha}, {"j", g.j}, {"beta", g.beta}, {"method", g.method}});
      } catch (const SizeGuard& e) {
        notes.push_back("gram at t=" + std::to_string(sc.t) + " skipped: " + e.what());
      }
    }
    if (sc.has_step && sc.t >= 1 && sc.t <= Ts) {
      const Vec gfull = pr.train.batching.kind == Batching::Kind::Full ? *sc.grad : grad_loss(net, ds, pr.loss, full);
      inner.at(sc.t).record(gfull.dot(*sc.grad), 9801.0 / 10000.0, {{"t", sc.t}});
    }
    if (std::binary_search(hpts.begin(), hpts.end(), sc.t))
      hessian_point(net, ds, pr.loss, HessianRegime::MultiClass, sc.t, hess, cfg.checks.hessian_max_params, notes);
  });

  const HittingTime T = rec.measured_T;
  const long long lim = limit_of(T);
  const auto& rn = pr.range_notes;

  CertificateReport hit = hitting_cert(T, Ts, "T + 1 >= T* = floor(log 4 / (4 eta))");
  settle(hit, budget, rn);
  res.certs.add(hit);

  const DynamicsResult dyn = chk.result();
  CertificateReport dr("partition.dynamics_early", "multi-class rules S1-S3 hold for 0 <= t <= T*", false);
  if (dyn.status != "insufficient-horizon") dr.record(static_cast<double>(dyn.total_violations()), 0.0, dyn.to_json());
  settle(dr, budget, rn);
  res.certs.add(dr);

  if (!gram.items.empty()) {
    CertificateReport r = gram.merged(lim);
    settle(r, budget, rn);
    res.certs.add(r);
  }
  if (!inner.items.empty()) {
    CertificateReport r = inner.merged(lim);
    settle(r, budget, rn, gc.g_min >= 0.99 ? "" : "premise -l'(z) >= 0.99 on [0, 1] not met by this loss");
    res.certs.add(r);
  }
  if (!hess.items.empty()) {
    CertificateReport r = hess.merged(lim);
    settle(r, budget, rn);
    res.certs.add(r);
  }

  const GridCheck lc = verify_general_constants(pr.loss, gc, 10001);
  CertificateReport lr("loss.general_constants", "g_min <= -l'(z) <= g_max and 0 <= l''(z) <= h_max on [0, z0]", true);
  lr.record(lc.worst_slack, 0.0, {{"z", lc.worst_z}, {"inequality", lc.worst_inequality}});
  lr.finalize();
  res.certs.add(lr);

  CertificateReport desc("descent.theorem2", "L(theta(0)) - L(theta(T*)) >= 0.262533", true);
  const StepRecord* sT = step_at(rec, Ts);
  double descent = std::numeric_limits<double>::quiet_NaN();
  if (sT) {
    descent = rec.steps.front().loss - sT->loss;
    desc.record(descent, descent_bound_theorem2(), {{"t", Ts}});
  } else {
    desc.extra["note"] = "no record at t = T*";
  }
  std::string premise;
  if (eta != 0.01) premise = "the constant is stated for eta = 0.01";
  else if (!(gc.g_min >= 0.5 && gc.g_max <= 1.0 && gc.h_max <= 1.0))
    premise = "premise g_min = 1/2, g_max = 1, h_max = 1 not met by this loss";
  settle(desc, budget, rn, premise);
  res.certs.add(desc);

  res.summary = run_summary(rec);
  res.summary["tstar"] = Ts;
  res.summary["Te"] = exp_hitting_time_Te(eta, n, m, delta, Variant::Multi);
  res.summary["descent_at_tstar"] = descent;
  res.summary["descent_bound"] = descent_bound_theorem2();
  res.summary["batch_size"] = B;
  res.summary["probability_budget"] = budget;
  res.summary["dynamics"] = dyn.to_json();
  if (!notes.empty()) res.summary["notes"] = notes;
  res.record = std::move(rec);
}

void run_global(const ExperimentConfig& cfg, const PreparedRun& pr, ExperimentResult& res) {
  const auto& ds = pr.ds;
  const double delta = *cfg.delta;
  const int m = pr.net0.m();
  const double V = need(pr.constants.V, "V");
  const double c = cfg.schedule->c;
  const bool expo = cfg.kind == "global-exp";
  const double budget = probability_budget(BudgetRegime::Binary, delta, m, ds.d());
  const HessianRegime regime = pr.train.layers == Layers::InputOnly ? HessianRegime::InputOnly : HessianRegime::Global;

  GlobalDynamicsChecker chk(ds);
  CertificateReport grad("gradient.lower_bound_global", "|grad L(theta(t))|^2 >= V L(theta(t))^2 for t >= 1", true);
  PerStep hess(regime == HessianRegime::InputOnly ? "hessian.input_only" : "hessian.global",
               regime == HessianRegime::InputOnly ? "|Hessian L| <= L(theta) (input layer)"
                                                  : "|Hessian L| <= (|theta|^2 + 1) L(theta)",
               false);
  const auto hpts = sample_points(1, cfg.train.steps, cfg.checks.hessian_points);
  json notes = json::array();

  RunRecord rec = run(pr.net0, ds, pr.loss, pr.schedule, pr.train, [&](const StepContext& sc) {
    const Network& net = *sc.net;
    chk.observe(net, sc.t);
    push_counts(res, chk.last(), cfg.checks.partition_dump);
    if (sc.has_step && sc.t >= 1) {
      const BoundValue b = gradient_lower_bound_global(sc.loss, V);
      if (b.vacuous) grad.record_vacuous();
      else grad.record(sc.grad->squaredNorm(), b.value, {{"t", sc.t}, {"loss", sc.loss}});
    }
    if (std::binary_search(hpts.begin(), hpts.end(), sc.t))
      hessian_point(net, ds, pr.loss, regime, sc.t, hess, cfg.checks.hessian_max_params, notes);
  });
  const auto& rn = pr.range_notes;

  const DynamicsResult dyn = chk.result();
  CertificateReport dr("partition.dynamics_global", "Stage I (t = 0 -> 1) and Stage II (t >= 1) rules", false);
  if (dyn.status != "insufficient-horizon") dr.record(static_cast<double>(dyn.total_violations()), 0.0, dyn.to_json());
  settle(dr, budget, rn);
  res.certs.add(dr);

  const ClassificationCheck cc = check_correct_classification(rec);
  CertificateReport cls = count_cert("classification.correct", "y_i f(x_i; theta(t)) > 0 for all i and t >= 1",
                                     cc.pass ? 0 : 1, {{"t", cc.t}, {"i", cc.i}, {"margin", cc.margin}});
  settle(cls, budget, rn);
  res.certs.add(cls);

  settle(grad, budget, rn);
  res.certs.add(grad);
  if (!hess.items.empty()) {
    CertificateReport r = hess.merged(LLONG_MAX);
    settle(r, budget, rn);
    res.certs.add(r);
  }

  RateKind rk{expo ? RateKind::Kind::Exponential : RateKind::Kind::PolyStage1, V, c};
  long long stage1_end = LLONG_MAX;
  RunRecord view = rec;
  if (!expo) {
    stage1_end = pr.schedule.force_stage2_at >= 1 ? pr.schedule.force_stage2_at : pr.schedule.T0;
    view.steps.erase(std::remove_if(view.steps.begin(), view.steps.end(),
                                    [&](const StepRecord& s) { return s.t >= stage1_end; }),
                     view.steps.end());
  }
  CertificateReport rate = fit_convergence_rate(view, rk);
  settle(rate, budget, rn);
  res.certs.add(rate);

  const ExpTypeConstants ec = certified_exptype(pr.loss);
  const GridCheck lc = verify_exptype_constants(pr.loss, ec, 20.0, 4001);
  CertificateReport lr("loss.exptype_constants", "-l'/l <= g_b, 0 <= l''/l <= h on [-R, R]; g_a <= -l'/l on [0, R]", true);
  lr.record(lc.worst_slack, 0.0, {{"z", lc.worst_z}, {"inequality", lc.worst_inequality}, {"R", 20.0}});
  lr.finalize();
  res.certs.add(lr);

  res.summary = run_summary(rec);
  res.summary["V"] = V;
  res.summary["c"] = c;
  res.summary["probability_budget"] = budget;
  res.summary["dynamics"] = dyn.to_json();
  if (!expo) {
    res.summary["T0"] = pr.schedule.T0;
    res.summary["stage2_certified"] = false;
    res.summary["stage2_note"] =
        "T0 = ceil((n log 2)^(2/(V c))) exceeds any feasible horizon; only the stage-1 envelope is checked";
  }
  if (!notes.empty()) res.summary["notes"] = notes;
  res.record = std::move(rec);
}

void run_prm(const ExperimentConfig& cfg, ExperimentResult& res) {
  const PrmSpec& p = *cfg.prm;
  TeacherStudentConfig tc;
  tc.d = p.d;
  tc.m = p.m;
  tc.M = p.M;
  tc.kappa = p.kappa;
  tc.steps = p.steps;
  tc.seed = p.seed ? *p.seed : derive_seed(cfg.seed, kPrmLabel);
  tc.eta = p.eta ? *p.eta : prm_eta_bound(tc);
  tc.validate();
  PrmRunRecord rec = run_prm_gd(tc);
  const long long Ts = tc.eta > 0.0 ? prm_tstar(tc) : -1;
  const std::string premise = rec.eta_compliant ? "" : "eta above the admissible bound";
  const std::vector<std::string> none;

  CertificateReport eta("prm.eta_admissible", "eta <= min{...} (learning-rate condition)", false);
  eta.record(tc.eta, prm_eta_bound(tc), {{"eta", tc.eta}});
  eta.finalize();
  res.certs.add(eta);

  CertificateReport desc = prm_descent_certificate(tc, rec);
  if (!premise.empty() && desc.status == CertStatus::Fail) {
    desc.status = CertStatus::Inconclusive;
    desc.extra["inconclusive_reason"] = premise;
  }
  res.certs.add(desc);

  CertificateReport hit("prm.hitting_time", "T >= T* (explicit T* + 1 formula)", true);
  if (Ts >= 0 && (!rec.hitting_censored || rec.hitting_T >= Ts))
    hit.record(static_cast<double>(rec.hitting_T), static_cast<double>(Ts),
               {{"T", rec.hitting_T}, {"censored", rec.hitting_censored}});
  settle(hit, 0.0, none, premise);
  res.certs.add(hit);

  if (rec.norm_growth_checks > 0) {
    CertificateReport r = count_cert("prm.norm_growth", "|w_k(t)| < |w_k(t+1)| < 2 |w_k(t)| for t <= T",
                                     rec.norm_growth_violations, {{"checks", rec.norm_growth_checks}});
    settle(r, 0.0, none, premise);
    res.certs.add(r);
  }
  if (rec.grad_lower_checks > 0) {
    CertificateReport r = count_cert("prm.gradient_lower",
                                     "|dL/dw_k| >= (d/(2 pi M)) sqrt((d-1)/d) - (1/2) sum_j |w_j| below the threshold",
                                     rec.grad_lower_violations, {{"checks", rec.grad_lower_checks}});
    settle(r, 0.0, none);
    res.certs.add(r);
  }
  const double L0 = population_loss_at_zero(rec.teacher);
  CertificateReport lz("prm.L_zero_stated", "L(0) = 1/2 (within 1e-12)", false);
  lz.record(std::abs(L0 - 0.5), 1e-12, {{"L_zero", L0}});
  lz.finalize();
  res.certs.add(lz);

  res.summary = prm_summary(rec);
  res.summary["descent_bound"] = prm_descent_bound(tc).total();
  res.prm = std::move(rec);
}

void run_certify_only(const ExperimentConfig& cfg, ExperimentResult& res) {
  const std::vector<std::string> none;
  auto equal_cert = [&](const std::string& id, const std::string& source, double got, double want, double tol) {
    CertificateReport r(id, source, false);
    r.record(std::abs(got - want), tol, {{"value", got}, {"reference", want}});
    r.finalize();
    res.certs.add(r);
  };
  const double a9 = lemma_a9_sum(0.01, 44);
  equal_cert("lemma_a9.closed_form", "sum_{t=1}^{T*-1} eta (1 - phi(t))^2 = 0.19659127915806962 (eta=0.01, T*=44)", a9,
             kA9Reference, 1e-14);
  equal_cert("lemma_a9.bruteforce", "closed form equals term-by-term summation", a9, lemma_a9_bruteforce(0.01, 44),
             1e-14);
  equal_cert("descent.theorem2_constant", "(9801/10000 - 11/100) eta (T* - 1) - 2.46 eta = 0.262533",
             descent_bound_theorem2(), kDescentConstant, 1e-12);

  json table = json::array();
  for (double eta : {0.01, 0.005, 0.002, 0.001})
    table.push_back({{"eta", eta}, {"binary", tstar(eta, Variant::Binary)}, {"multi", tstar(eta, Variant::Multi)}});
  res.summary["tstar"] = table;
  const double eta = cfg.schedule && cfg.schedule->kind == "constant" ? cfg.schedule->eta : 0.01;
  {
    CertificateReport r("hitting_time.Te_multi", "T_e + 1 >= T* (multi-class)", true);
    r.record(static_cast<double>(exp_hitting_time_Te(eta, 1, 1, 0.5, Variant::Multi) + 1),
             static_cast<double>(tstar(eta, Variant::Multi)), {{"eta", eta}});
    r.finalize();
    res.certs.add(r);
  }
  if (cfg.dataset) {
    const LabeledDataset ds = build_dataset(cfg);
    res.dataset_digest = dataset_digest(ds);
    const double delta = *cfg.delta;
    if (ds.kind == LabelKind::Binary) {
      const SeparabilityReport sep = validate_separable(ds);
      res.summary["separability"] = to_json(sep);
      CertificateReport r = count_cert("data.orthogonal_separable", "same-class x_i^T x_j >= 0, cross-class <= 0",
                                       sep.satisfies_4_1_i ? 0 : 1, json::object());
      r.finalize();
      res.certs.add(r);
      const GammaConstants g = compute_gamma_constants(ds);
      res.summary["gamma1"] = g.gamma1;
      res.summary["gamma2"] = g.gamma2;
      if (cfg.model) {
        const int m = cfg.model->m;
        res.summary["V"] = to_json(compute_V(ds, m, delta));
        res.summary["descent_bound_theorem1"] = descent_bound_theorem1(g.gamma1, g.gamma2, ds.n(), m, delta);
        res.summary["probability_budget"] = probability_budget(BudgetRegime::Binary, delta, m, ds.d());
        CertificateReport te("hitting_time.Te_binary", "T_e + 1 >= T* (binary)", true);
        te.record(static_cast<double>(exp_hitting_time_Te(eta, ds.n(), m, delta, Variant::Binary) + 1),
                  static_cast<double>(tstar(eta, Variant::Binary)), {{"eta", eta}, {"n", ds.n()}, {"m", m}});
        te.finalize();
        res.certs.add(te);
      }
    } else {
      const SeparabilityReport sep = validate_concentrated(ds);
      res.summary["concentration"] = to_json(sep);
      CertificateReport r = count_cert("data.concentrated", "pairwise x_i^T x_j >= s = 0", sep.satisfies_4_3 ? 0 : 1,
                                       json::object());
      r.finalize();
      res.certs.add(r);
    }
  }
  res.summary["kind"] = "certify-only";
}

std::string write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out << text;
  out.close();
  return sha256_hex(text);
}

void write_counts_csv(const std::vector<PartitionCountRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << "t,i,TL,TD,FL,FD\n";
  for (const auto& r : rows)
    out << r.t << ',' << r.i << ',' << r.counts[0] << ',' << r.counts[1] << ',' << r.counts[2] << ',' << r.counts[3]
        << '\n';
}

json versions() {
  return {{"esc", kVersion},
          {"compiler", __VERSION__},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

json interpretation(const ExperimentConfig& cfg) {
  json notes = json::array();
  if (cfg.kind == "early-multiclass")
    notes.push_back("iterations are (S)GD steps; batch size and delta are not fixed by the published table");
  if (cfg.kind == "global-poly") notes.push_back("stage 2 of the two-stage schedule is not certified");
  if (cfg.kind == "prm") notes.push_back("L(0) is evaluated in closed form from the teacher; the stated 1/2 is checked separately");
  return notes;
}

}  // namespace

bool ExperimentResult::aborted() const { return record && record->status == RunStatus::Aborted; }

LabeledDataset build_dataset(const ExperimentConfig& cfg) {
  if (!cfg.dataset) throw ConfigError("config.dataset: required");
  const DatasetSpec& d = *cfg.dataset;
  const std::uint64_t seed = d.seed ? *d.seed : derive_seed(cfg.seed, kDataLabel);
  if (d.source == "orthant") return gen_orthant_separable(d.n, d.d, seed, d.antipodal, d.mirror);
  if (d.source == "concentrated") return gen_concentrated(d.n, d.d, d.classes, seed);
  if (d.source == "mnist")
    return load_mnist(d.images.empty() ? bundled("train-images-1000-idx3-ubyte") : d.images,
                      d.labels.empty() ? bundled("train-labels-1000-idx1-ubyte") : d.labels, d.count, d.normalize);
  return load_cifar10(d.path, d.count, d.normalize);
}

PreparedRun prepare_run(const ExperimentConfig& cfg) {
  PreparedRun pr;
  pr.ds = build_dataset(cfg);
  check_dataset(pr.ds);
  pr.loss = parse_loss(cfg.loss);
  const ModelSpec& ms = *cfg.model;
  const ScheduleSpec& ss = *cfg.schedule;
  const double delta = *cfg.delta;
  const int n = pr.ds.n(), m = ms.m;
  const bool multi = cfg.kind == "early-multiclass";
  auto& notes = pr.range_notes;

  pr.constants = derive_constants(pr.ds, m, delta);
  TheoryConstants& tc = pr.constants;

  pr.train.steps = cfg.train.steps;
  pr.train.record_every = cfg.train.record_every;
  pr.train.layers = cfg.train.layers == "input-only" ? Layers::InputOnly : Layers::All;
  if (cfg.train.batching == "stochastic") {
    pr.train.batching.kind = Batching::Kind::Stochastic;
    pr.train.batching.B = cfg.train.batch_size;
    pr.train.batching.with_replacement = cfg.train.with_replacement;
    pr.train.batching.seed = cfg.train.batch_seed ? *cfg.train.batch_seed : derive_seed(cfg.seed, kBatchLabel);
    tc.B = cfg.train.batch_size;
  } else {
    tc.B = n;
  }

  if (ss.kind == "constant") {
    pr.schedule = LrSchedule::constant(ss.eta);
    tc.eta = ss.eta;
  } else if (ss.kind == "loss-inverse") {
    pr.schedule = LrSchedule::loss_inverse(ss.eta0, ss.c);
    tc.eta = ss.eta0;
    tc.c = ss.c;
  } else {
    const double V = tc.V ? *tc.V : 0.0;
    const long long T0 = ss.T0 ? *ss.T0 : two_stage_T0(n, V, ss.c);
    pr.schedule = LrSchedule::two_stage_poly(ss.eta0, ss.c, ss.c_prime, ss.r, T0);
    pr.schedule.force_stage2_at = ss.force_stage2_at;
    tc.eta = ss.eta0;
    tc.c = ss.c;
    tc.c_prime = ss.c_prime;
    tc.r = ss.r;
    tc.T0 = T0;
    pr.derivation["T0"] = T0;
    pr.derivation["T0_rule"] = ss.T0 ? "explicit" : "ceil((n log 2)^(2/(V c)))";
  }
  for (const auto& s : pr.schedule.range_notes()) notes.push_back(s);

  // Initialization scale from the theorem's parameter setting.
  double kbound = 0.0;
  std::string rule;
  if (cfg.kind == "early-binary") {
    const double eta = ss.eta;
    const double mu0 = need(tc.mu0, "mu0 (data must satisfy the separability assumption)");
    kbound = std::min({1.0 / 1000.0, eta / 2000.0, eta / (3.0 * n), eta * mu0 / (3.0 * n)});
    rule = "min{1/1000, eta/2000, eta/(3n), eta mu0/(3n)}";
  } else if (multi) {
    const double eta = ss.eta;
    const int B = *tc.B;
    kbound = std::min(eta / 10.0, eta / (3.0 * B));
    rule = "min{eta/10, eta/(3B)}";
  } else {
    const double eta0 = ss.eta0;
    const double mu0 = need(tc.mu0, "mu0 (data must satisfy the separability assumption)");
    kbound = std::min({eta0 / 2000.0, eta0 * mu0 / (3.0 * n), eta0 / (2.0 * n * loss_value(pr.loss, 0.0))});
    rule = "min{eta0/2000, eta0 mu0/(3n), eta0/(2n l(0))}";
  }
  pr.kappa = ms.kappa ? *ms.kappa : kbound;
  tc.kappa = pr.kappa;
  pr.derivation["kappa"] = pr.kappa;
  pr.derivation["kappa_rule"] = ms.kappa ? "explicit" : rule;
  pr.derivation["kappa_bound"] = kbound;
  if (pr.kappa > kbound * (1.0 + 1e-12)) notes.push_back("kappa above " + rule);

  const double logt = std::log(2.0 * n * static_cast<double>(n) / delta);
  if (cfg.kind == "early-binary") {
    if (pr.loss != LossKind::Quadratic) notes.push_back("the early binary theorem uses the quadratic loss");
    if (m < std::max(144.0 * logt, 4.0)) notes.push_back("m below max{144 log(2n^2/delta), 4}");
  }
  if (multi) {
    if (m < 6) notes.push_back("m below 6");
    tc.general = certified_general(pr.loss);
  }
  if (pr.ds.kind == LabelKind::Binary) {
    const SeparabilityReport sep = validate_separable(pr.ds);
    if (!sep.satisfies_4_1_i) notes.push_back("data not orthogonally separable");
    pr.derivation["separability"] = to_json(sep);
  } else {
    const SeparabilityReport sep = validate_concentrated(pr.ds);
    if (!sep.satisfies_4_3) notes.push_back("data not concentrated (some x_i^T x_j < 0)");
    pr.derivation["concentration"] = to_json(sep);
  }
  if (is_global(cfg.kind)) {
    if (pr.loss != LossKind::Exp && pr.loss != LossKind::Logistic)
      notes.push_back("global theorems need an exponential-type loss");
    else tc.exptype = certified_exptype(pr.loss);
    if (!(need(tc.V, "V") > 0.0)) notes.push_back("V <= 0: width too small for the gradient lower bound");
    if (cfg.kind == "global-exp" && pr.train.layers != Layers::InputOnly)
      notes.push_back("the exponential-rate theorem trains the input layer only");
    if (cfg.kind == "global-poly" && pr.train.layers != Layers::All)
      notes.push_back("the polynomial-rate theorem trains both layers");
    pr.derivation["V"] = to_json(compute_V(pr.ds, m, delta));
  }
  if (pr.train.batching.kind == Batching::Kind::Stochastic && !multi)
    notes.push_back("binary theorems use full-batch gradient descent");

  const InitSpec init{pr.kappa, ms.seed ? *ms.seed : derive_seed(cfg.seed, kModelLabel)};
  pr.net0 = multi ? init_multi(m, pr.ds.d(), pr.ds.num_classes, init) : init_binary(m, pr.ds.d(), init);
  return pr;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult res;
  res.kind = cfg.kind;
  if (cfg.kind == "prm") {
    run_prm(cfg, res);
  } else if (cfg.kind == "certify-only") {
    run_certify_only(cfg, res);
  } else {
    const PreparedRun pr = prepare_run(cfg);
    res.dataset_digest = dataset_digest(pr.ds);
    if (cfg.kind == "early-binary") run_early_binary(cfg, pr, res);
    else if (cfg.kind == "early-multiclass") run_early_multi(cfg, pr, res);
    else run_global(cfg, pr, res);
    res.summary["kappa"] = pr.kappa;
    res.summary["derivation"] = pr.derivation;
    res.summary["constants"] = pr.constants.to_json();
    res.summary["range_notes"] = pr.range_notes;
    res.summary["theorem_compliant"] = pr.range_notes.empty();
  }
  long long failed = 0;
  for (const auto& r : res.certs.reports)
    if (r.status == CertStatus::Fail) ++failed;
  res.summary["certificates_failed"] = failed;
  res.summary["certificates_total"] = res.certs.reports.size();
  return res;
}

void write_outputs(const ExperimentConfig& cfg, const ExperimentResult& res, const std::string& dir) {
  fs::create_directories(dir);
  json digests = json::object();
  if (res.record) {
    write_steps_csv(*res.record, dir + "/steps.csv");
    digests["steps.csv"] = sha256_file(dir + "/steps.csv");
  }
  if (res.prm) {
    write_prm_csv(*res.prm, dir + "/prm.csv");
    digests["prm.csv"] = sha256_file(dir + "/prm.csv");
  }
  digests["summary.json"] = write_text(dir + "/summary.json", res.summary.dump(2) + "\n");
  digests["certificates.json"] = write_text(dir + "/certificates.json", res.certs.to_json().dump(2) + "\n");
  write_text(dir + "/certificates.txt", res.certs.summary_text());
  if (!res.partition_counts.empty()) {
    write_counts_csv(res.partition_counts, dir + "/partition_counts.csv");
    digests["partition_counts.csv"] = sha256_file(dir + "/partition_counts.csv");
  }
  if (!res.partition_tables.empty()) {
    write_partition_dump(res.partition_tables, dir + "/partitions.bin");
    digests["partitions.bin"] = sha256_file(dir + "/partitions.bin");
  }
  if (!res.dataset_digest.empty()) digests["dataset"] = res.dataset_digest;
  json manifest;
  manifest["config"] = config_to_json(cfg);
  manifest["digests"] = digests;
  manifest["versions"] = versions();
  manifest["interpretation"] = interpretation(cfg);
  write_text(dir + "/manifest.json", manifest.dump(2) + "\n");
}

namespace {

int finish_cmd(const ExperimentResult& res, const std::string& out) {
  std::cout << res.certs.summary_text();
  std::cout << "outputs: " << out << "\n";
  if (res.aborted()) std::cout << "run aborted: " << res.record->status_detail << "\n";
  return res.failed() ? 1 : 0;
}

}  // namespace

int cmd_train(const ExperimentConfig& cfg, const std::string& out) {
  const ExperimentResult res = run_experiment(cfg);
  write_outputs(cfg, res, out);
  return finish_cmd(res, out);
}

int cmd_prm(const ExperimentConfig& cfg, const std::string& out) {
  if (cfg.kind != "prm") throw ConfigError("config.kind: the prm subcommand needs kind \"prm\"");
  return cmd_train(cfg, out);
}

int cmd_verify(const std::string& run_dir, const std::string& out) {
  const json manifest = read_json_file(run_dir + "/manifest.json");
  const ExperimentConfig cfg = parse_config(manifest.at("config"));
  const ExperimentResult res = run_experiment(cfg);
  write_outputs(cfg, res, out);
  const json fresh = read_json_file(out + "/manifest.json");
  json mismatches = json::array();
  for (const auto& [name, digest] : manifest.at("digests").items()) {
    const auto& now = fresh.at("digests");
    if (!now.contains(name) || now.at(name) != digest) mismatches.push_back(name);
    // Stored files must still match the manifest too.
    const std::string stored = run_dir + "/" + name;
    if (name != "dataset" && (!fs::exists(stored) || sha256_file(stored) != digest))
      mismatches.push_back("stored " + name);
  }
  const bool match = mismatches.empty();
  json report = {{"run_dir", run_dir}, {"match", match}, {"mismatches", mismatches},
                 {"certificates_failed", res.summary["certificates_failed"]}};
  write_text(out + "/verify.json", report.dump(2) + "\n");
  std::cout << res.certs.summary_text();
  std::cout << (match ? "digests match the stored run\n" : "digest mismatch: " + mismatches.dump() + "\n");
  return match && !res.failed() ? 0 : 1;
}

int cmd_sweep(const SweepSpec& spec, const std::string& out, int jobs) {
  const std::size_t total = spec.size();
  fs::create_directories(out);
  std::vector<json> rows(total);
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  auto worker = [&]() {
    for (std::size_t i = next++; i < total; i = next++) {
      char name[32];
      std::snprintf(name, sizeof name, "entry_%05zu", i);
      const std::string dir = out + "/" + name;
      std::vector<json> values;
      const json cfg_json = spec.entry(i, &values);
      json row = {{"index", i}, {"dir", name}, {"values", values}};
      try {
        const ExperimentConfig cfg = parse_config(cfg_json);
        const ExperimentResult res = run_experiment(cfg);
        write_outputs(cfg, res, dir);
        row["summary"] = read_json_file(dir + "/summary.json");
        row["failed"] = res.failed();
      } catch (const std::exception& e) {
        row["error"] = e.what();
        row["failed"] = true;
      }
      rows[i] = std::move(row);
      std::lock_guard<std::mutex> lk(log_mu);
      std::cerr << "sweep: finished " << name << "\n";
    }
  };
  const int width = std::max(1, std::min<int>(jobs, static_cast<int>(total)));
  std::vector<std::thread> pool;
  for (int w = 0; w < width; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  const std::vector<std::string> keys = {"status",      "initial_loss", "final_loss", "measured_T",
                                         "tstar",       "descent_at_tstar", "descent_bound", "hitting_T",
                                         "loss_initial", "loss_final", "certificates_failed"};
  std::ofstream csv(out + "/aggregate.csv");
  if (!csv) throw FormatError("cannot write " + out + "/aggregate.csv");
  csv << "index,dir";
  for (const auto& a : spec.axes) csv << ',' << a.pointer;
  for (const auto& k : keys) csv << ',' << k;
  csv << ",failed,error\n";
  bool any_failed = false;
  for (const auto& row : rows) {
    csv << row["index"].get<std::size_t>() << ',' << row["dir"].get<std::string>();
    for (const auto& v : row["values"]) csv << ',' << (v.is_string() ? v.get<std::string>() : v.dump());
    for (const auto& k : keys) {
      csv << ',';
      if (row.contains("summary") && row["summary"].contains(k)) {
        const json& v = row["summary"][k];
        if (v.is_number_float()) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
          csv << buf;
        } else {
          csv << (v.is_string() ? v.get<std::string>() : v.dump());
        }
      }
    }
    const bool failed = row["failed"].get<bool>();
    any_failed = any_failed || failed;
    std::string err = row.contains("error") ? row["error"].get<std::string>() : "";
    std::replace(err.begin(), err.end(), ',', ';');
    csv << ',' << (failed ? 1 : 0) << ',' << err << '\n';
  }
  std::cout << "sweep: " << total << " entries written to " << out << "/aggregate.csv\n";
  return any_failed ? 1 : 0;
}

int cmd_gen_data(const ExperimentConfig& cfg, const std::string& out) {
  const LabeledDataset ds = build_dataset(cfg);
  check_dataset(ds);
  json side;
  side["config"] = config_to_json(cfg);
  side["digest"] = dataset_digest(ds);
  if (ds.kind == LabelKind::Binary) {
    side["separability"] = to_json(validate_separable(ds));
    const GammaConstants g = compute_gamma_constants(ds);
    side["gamma1"] = g.gamma1;
    side["gamma2"] = g.gamma2;
    if (cfg.model && cfg.delta) side["V"] = to_json(compute_V(ds, cfg.model->m, *cfg.delta));
  } else {
    side["concentration"] = to_json(validate_concentrated(ds));
  }
  fs::create_directories(out);
  export_dataset_csv(ds, out + "/dataset.csv", side);
  std::cout << "dataset: " << out << "/dataset.csv (" << ds.n() << " x " << ds.d() << ")\n";
  return 0;
}

int cmd_report(const std::string& dir, std::ostream& os) {
  if (fs::exists(dir + "/aggregate.csv")) {
    std::ifstream in(dir + "/aggregate.csv");
    os << in.rdbuf();
    return 0;
  }
  const json certs = read_json_file(dir + "/certificates.json");
  CertificateSet set;
  bool failed = false;
  for (const auto& [key, r] : certs.items()) {
    CertificateReport rep;
    rep.id = key;
    rep.checks = r.at("checks").get<long long>();
    rep.failures = r.at("failures").get<long long>();
    rep.slack = r.at("slack").is_number() ? r.at("slack").get<double>() : std::numeric_limits<double>::quiet_NaN();
    const std::string st = r.at("status").get<std::string>();
    rep.status = st == "pass" ? CertStatus::Pass
                 : st == "fail" ? CertStatus::Fail
                 : st == "vacuous" ? CertStatus::Vacuous
                                   : CertStatus::Inconclusive;
    failed = failed || rep.status == CertStatus::Fail;
    set.add(rep);
  }
  os << set.summary_text();
  return failed ? 1 : 0;
}

}  // namespace esc::cli
