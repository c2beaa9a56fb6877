// Acceptance suite. Prints one PASS/FAIL line per criterion; exits 0 iff the
// set of failing criteria equals --expect-fail (empty by default).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "esc/cli/config.hpp"
#include "esc/cli/experiments.hpp"
#include "esc/digest.hpp"
#include "esc/prm.hpp"
#include "esc/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace esc;
using namespace esc::cli;

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

const CertificateReport* find(const ExperimentResult& r, const std::string& id) {
  for (const auto& c : r.certs.reports)
    if (c.id == id) return &c;
  return nullptr;
}

bool passed(const ExperimentResult& r, const std::string& id, long long min_checks = 1) {
  const CertificateReport* c = find(r, id);
  return c && c->status == CertStatus::Pass && c->checks >= min_checks;
}

std::string status_of(const ExperimentResult& r, const std::string& id) {
  const CertificateReport* c = find(r, id);
  if (!c) return "missing";
  return cert_status_name(c->status) + " (" + std::to_string(c->failures) + "/" + std::to_string(c->checks) + ")";
}

// ---------------------------------------------------------------- configs

json table1(int m, const std::string& loss) {
  return {{"kind", "early-multiclass"},
          {"seed", 1},
          {"delta", 0.01},
          {"dataset", {{"source", "mnist"}, {"count", 1000}, {"normalize", true}}},
          {"model", {{"m", m}, {"kappa", "auto"}}},
          {"loss", loss},
          {"schedule", {{"kind", "constant"}, {"eta", 0.01}}},
          {"train", {{"steps", 34}, {"batching", "stochastic"}, {"batch_size", 64}}},
          {"checks", {{"gram", true}}}};
}

json early_binary(std::uint64_t seed, int n, int d, int m, double delta, bool gram, int hessian_points,
                  double eta = 0.01) {
  return {{"kind", "early-binary"},
          {"seed", seed},
          {"delta", delta},
          {"dataset", {{"source", "orthant"}, {"n", n}, {"d", d}}},
          {"model", {{"m", m}, {"kappa", "auto"}}},
          {"loss", "quadratic"},
          {"schedule", {{"kind", "constant"}, {"eta", eta}}},
          {"train", {{"steps", 44}}},
          {"checks", {{"gram", gram}, {"hessian_points", hessian_points}}}};
}

json global_exp(std::uint64_t seed, int m, long long steps, int hessian_points) {
  return {{"kind", "global-exp"},
          {"seed", seed},
          {"delta", 1e-10},
          {"dataset", {{"source", "orthant"}, {"n", 20}, {"d", 20}}},
          {"model", {{"m", m}, {"kappa", "auto"}}},
          {"loss", "exp"},
          {"schedule", {{"kind", "loss-inverse"}, {"eta0", 0.3}, {"c", 0.5}}},
          {"train", {{"steps", steps}, {"layers", "input-only"}}},
          {"checks", {{"hessian_points", hessian_points}}}};
}

json global_poly() {
  return {{"kind", "global-poly"},
          {"seed", 1},
          {"delta", 1e-10},
          {"dataset", {{"source", "orthant"}, {"n", 20}, {"d", 20}}},
          {"model", {{"m", 1000}, {"kappa", "auto"}}},
          {"loss", "logistic"},
          {"schedule", {{"kind", "two-stage-poly"}, {"eta0", 0.01}, {"c", 0.12}, {"c_prime", 0.1}, {"r", 0.5}, {"T0", "auto"}}},
          {"train", {{"steps", 2000}}}};
}

json multi_small() {
  return {{"kind", "early-multiclass"},
          {"seed", 1},
          {"delta", 0.01},
          {"dataset", {{"source", "concentrated"}, {"n", 30}, {"d", 20}, {"classes", 3}}},
          {"model", {{"m", 50}, {"kappa", "auto"}}},
          {"loss", "logistic"},
          {"schedule", {{"kind", "constant"}, {"eta", 0.01}}},
          {"train", {{"steps", 34}}},
          {"checks", {{"gram", true}, {"hessian_points", 10}}}};
}

json prm() {
  return {{"kind", "prm"},
          {"seed", 1},
          {"prm", {{"d", 10}, {"m", 10}, {"M", 10}, {"kappa", 0.1}, {"eta", "auto"}, {"steps", 50}}}};
}

// ---------------------------------------------------------------- runs

struct Pass {
  fs::path root;
  std::map<std::string, std::string> digests;
  std::map<std::string, ExperimentResult> runs;

  const ExperimentResult& go(const std::string& name, const json& cfg_json) {
    const ExperimentConfig cfg = parse_config(cfg_json);
    ExperimentResult res = run_experiment(cfg);
    const fs::path dir = root / name;
    write_outputs(cfg, res, dir.string());
    for (const char* f : {"steps.csv", "prm.csv", "certificates.json"})
      if (fs::exists(dir / f)) digests[name + "/" + f] = sha256_file((dir / f).string());
    return runs[name] = std::move(res);
  }
};

const std::vector<int> kTableWidths = {100, 200, 500, 1000};

void run_all(Pass& p) {
  for (int m : kTableWidths) p.go("table1_m" + std::to_string(m), table1(m, "logistic"));
  p.go("table1_hinge_m200", table1(200, "hinge"));
  for (int s = 1; s <= 10; ++s) p.go("early_binary_s" + std::to_string(s), early_binary(s, 40, 30, 4096, 0.01, true, 0));
  for (int s = 1; s <= 10; ++s) p.go("partition_early_s" + std::to_string(s), early_binary(s, 20, 20, 4500, 1e-10, false, 0));
  for (int s = 1; s <= 10; ++s) p.go("partition_global_s" + std::to_string(s), global_exp(s, 1000, 1000, 0));
  p.go("hessian_binary", early_binary(1, 20, 20, 60, 0.01, false, 10));
  p.go("hessian_multi", multi_small());
  p.go("hessian_input_only", global_exp(1, 80, 300, 10));
  p.go("global_poly", global_poly());
  p.go("prm", prm());
}

// ---------------------------------------------------------------- criteria

struct Outcome {
  bool pass = true;
  std::string detail;
};

Outcome c1() {
  Outcome o;
  const long long b = tstar(0.01, Variant::Binary);
  std::vector<long long> got;
  for (double eta : {0.01, 0.005, 0.002, 0.001}) got.push_back(tstar(eta, Variant::Multi));
  o.pass = b == 44 && got == std::vector<long long>{34, 69, 173, 346};
  o.detail = "binary " + std::to_string(b) + "; multi " + std::to_string(got[0]) + "," + std::to_string(got[1]) + "," +
             std::to_string(got[2]) + "," + std::to_string(got[3]);
  return o;
}

Outcome c2() {
  const double closed = lemma_a9_sum(0.01, 44), brute = lemma_a9_bruteforce(0.01, 44);
  const double e1 = std::abs(closed - 0.19659127915806962), e2 = std::abs(closed - brute);
  return {e1 <= 1e-14 && e2 <= 1e-14, "closed " + fmt(closed) + ", |closed-ref| " + fmt(e1) + ", |closed-brute| " + fmt(e2)};
}

double descent_of(const ExperimentResult& r) {
  const json& v = r.summary.at("descent_at_tstar");
  return v.is_number() ? v.get<double>() : std::nan("");
}

Outcome c3(const Pass& p) {
  Outcome o;
  const double bound = descent_bound_theorem2();
  std::ostringstream os;
  os << "bound " << fmt(bound) << "; descent";
  for (int m : kTableWidths) {
    const double dsc = descent_of(p.runs.at("table1_m" + std::to_string(m)));
    os << " m=" << m << ":" << fmt(dsc);
    if (!(dsc >= bound)) o.pass = false;
    if (m == 200 && !(dsc >= 0.35 && dsc <= 0.60)) o.pass = false;
  }
  o.detail = os.str();
  return o;
}

Outcome c4(const Pass& p) {
  Outcome o;
  double worst = std::numeric_limits<double>::infinity();
  for (int s = 1; s <= 10; ++s) {
    const auto& r = p.runs.at("early_binary_s" + std::to_string(s));
    const double dsc = descent_of(r), bound = r.summary.at("descent_bound").get<double>();
    worst = std::min(worst, dsc - bound);
    if (!(dsc >= bound)) o.pass = false;
  }
  o.detail = "10 seeds, worst descent - bound " + fmt(worst);
  return o;
}

long long count_violations(const ExperimentResult& r) {
  return r.summary.at("dynamics").at("total_violations").get<long long>();
}

Outcome c5(const Pass& p) {
  Outcome o;
  long long viol = 0;
  double budget = 0.0;
  for (const char* fam : {"partition_early_s", "partition_global_s"})
    for (int s = 1; s <= 10; ++s) {
      const auto& r = p.runs.at(fam + std::to_string(s));
      viol += count_violations(r);
      budget = std::max(budget, r.summary.at("probability_budget").get<double>());
      const bool compliant = r.summary.at("theorem_compliant").get<bool>();
      const std::string id = std::string(fam) == "partition_early_s" ? "partition.dynamics_early" : "partition.dynamics_global";
      if (!compliant || !passed(r, id)) o.pass = false;
    }
  if (!(budget < 1e-9) || viol != 0) o.pass = false;

  // Negative control: eta = 10, rules checked over the eta = 0.01 horizon.
  const ExperimentConfig cfg = parse_config(early_binary(1, 20, 20, 4500, 1e-10, false, 0, 10.0));
  const PreparedRun pr = prepare_run(cfg);
  EarlyDynamicsChecker chk(pr.ds, Variant::Binary, tstar(0.01, Variant::Binary));
  run(pr.net0, pr.ds, pr.loss, pr.schedule, pr.train, [&](const StepContext& sc) { chk.observe(*sc.net, sc.t); });
  const long long neg = chk.result().total_violations();
  if (neg < 1) o.pass = false;
  o.detail = "20 runs, " + std::to_string(viol) + " violations, max budget " + fmt(budget) + "; eta=10 control " +
             std::to_string(neg) + " violations";
  return o;
}

Outcome c6(const Pass& p) {
  Outcome o;
  bool block = true, lower = true, multi = true;
  for (int s = 1; s <= 10; ++s) {
    const auto& r = p.runs.at("early_binary_s" + std::to_string(s));
    block = block && passed(r, "gram.block_structure", 44);
    lower = lower && passed(r, "gram.lower_bound");
  }
  for (int m : kTableWidths) multi = multi && passed(p.runs.at("table1_m" + std::to_string(m)), "gram.multi_min", 34);
  o.pass = block && lower && multi;
  o.detail = std::string("cross-class block ") + (block ? "ok" : "FAIL") + "; binary lower bound " +
             (lower ? "ok" : "FAIL " + status_of(p.runs.at("early_binary_s1"), "gram.lower_bound") + " seed 1") +
             "; multi-class min entry " + (multi ? "ok" : "FAIL");
  return o;
}

Outcome c7(const Pass& p) {
  Outcome o;
  const auto& h = p.runs.at("table1_hinge_m200");
  const bool inner = passed(h, "sgd.inner_product", 33);
  const bool hb = passed(p.runs.at("hessian_binary"), "hessian.early_binary", 10);
  const bool hm = passed(p.runs.at("hessian_multi"), "hessian.multi_class", 10);
  const bool hi = passed(p.runs.at("hessian_input_only"), "hessian.input_only", 10);
  o.pass = inner && hb && hm && hi;
  o.detail = "inner product " + status_of(h, "sgd.inner_product") + "; hessian binary " +
             status_of(p.runs.at("hessian_binary"), "hessian.early_binary") + ", multi " +
             status_of(p.runs.at("hessian_multi"), "hessian.multi_class") + ", input-only " +
             status_of(p.runs.at("hessian_input_only"), "hessian.input_only");
  return o;
}

Outcome c8(const Pass& p) {
  const auto& r = p.runs.at("partition_global_s1");
  const bool ok = passed(r, "rate.exponential") && r.summary.at("V").get<double>() > 0.0;
  return {ok, "envelope " + status_of(r, "rate.exponential") + ", V " + fmt(r.summary.at("V").get<double>()) +
                  ", steps run " + std::to_string(r.record->steps.back().t) + " (" + r.summary.at("status").get<std::string>() + ")"};
}

std::string t0_text(long long T0) {
  return T0 == std::numeric_limits<long long>::max() ? "saturated" : std::to_string(T0);
}

Outcome c9(const Pass& p) {
  const auto& r = p.runs.at("global_poly");
  const bool ok = passed(r, "rate.poly_stage1", 2000) && !r.summary.at("stage2_certified").get<bool>();
  return {ok, "stage-1 envelope " + status_of(r, "rate.poly_stage1") + ", V " + fmt(r.summary.at("V").get<double>()) +
                  ", T0 " + t0_text(r.summary.at("T0").get<long long>()) + " (stage 2 not certified)"};
}

// Relative error of the analytic gradient against central differences.
double fd_error(Network net, const LabeledDataset& ds, LossKind loss) {
  const Vec g = grad_loss(net, ds, loss, all_indices(ds.n()));
  Vec theta = net.flatten();
  Vec fd(theta.size());
  const double h = 1e-6;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double keep = theta(k);
    theta(k) = keep + h;
    net.assign_flat(theta);
    const double up = empirical_loss(net, ds, loss);
    theta(k) = keep - h;
    net.assign_flat(theta);
    const double dn = empirical_loss(net, ds, loss);
    theta(k) = keep;
    fd(k) = (up - dn) / (2.0 * h);
  }
  return (g - fd).norm() / std::max(g.norm(), 1e-12);
}

bool kink_free(const Network& net, const LabeledDataset& ds, LossKind loss) {
  if ((preactivations(net, ds.X).array().abs() < 1e-3).any()) return false;
  if (loss == LossKind::Hinge && ((margins(net, ds).array() - 1.0).abs() < 1e-3).any()) return false;
  return true;
}

Outcome c10() {
  Outcome o;
  std::ostringstream os;
  double worst_fd = 0.0;
  int cases = 0;
  CounterRng rng(20221, 0xFD);
  for (Variant v : {Variant::Binary, Variant::Multi}) {
    const std::vector<LossKind> losses = v == Variant::Binary
                                             ? std::vector<LossKind>{LossKind::Quadratic, LossKind::Exp, LossKind::Logistic, LossKind::Hinge}
                                             : std::vector<LossKind>{LossKind::Exp, LossKind::Logistic, LossKind::Hinge};
    for (LossKind loss : losses) {
      int done = 0;
      for (std::uint64_t s = 0; done < 50 && s < 5000; ++s) {
        const LabeledDataset ds = v == Variant::Binary ? gen_orthant_separable(6, 5, 100 + s, true, false)
                                                       : gen_concentrated(6, 5, 3, 100 + s);
        const Network net = v == Variant::Binary ? init_binary(8, 5, {2.0, 500 + s}) : init_multi(8, 5, 3, {2.0, 500 + s});
        if (!kink_free(net, ds, loss)) continue;
        worst_fd = std::max(worst_fd, fd_error(net, ds, loss));
        ++done;
      }
      if (done < 50) o.pass = false;
      ++cases;
    }
  }
  if (!(worst_fd <= 1e-5)) o.pass = false;
  os << "finite differences: " << cases << " (model, loss) pairs x 50 points, worst rel err " << fmt(worst_fd);

  // Closed-form population loss against Monte Carlo.
  TeacherStudentConfig tc;
  const Mat V = teacher_weights(tc);
  double worst_z = 0.0;
  for (int k = 0; k < 20; ++k) {
    Mat W(tc.m, tc.d);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = 0.3 * rng.normal();
    const double closed = population_loss(W, V);
    const MonteCarloEstimate mc = mc_population_loss(W, V, 1'000'000, derive_seed(7, k));
    worst_z = std::max(worst_z, std::abs(closed - mc.mean) / mc.std_error);
  }
  if (!(worst_z <= 4.0)) o.pass = false;
  os << "; Monte Carlo: 20 states, worst |z| " << fmt(worst_z);

  // Homogeneity: <theta, grad L> = sum k(w_i, w_j) - sum k(w_i, v_j).
  double worst_h = 0.0;
  for (int k = 0; k < 100; ++k) {
    Mat W(tc.m, tc.d);
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = 0.5 * rng.normal();
    const Mat G = population_grad(W, V);
    const double lhs = (W.array() * G.array()).sum();
    double rhs = 0.0;
    for (int i = 0; i < W.rows(); ++i) {
      for (int j = 0; j < W.rows(); ++j) rhs += arccos_kernel(W.row(i).transpose(), W.row(j).transpose());
      for (int j = 0; j < V.rows(); ++j) rhs -= arccos_kernel(W.row(i).transpose(), V.row(j).transpose());
    }
    worst_h = std::max(worst_h, std::abs(lhs - rhs) / std::max(std::abs(rhs), 1e-300));
  }
  if (!(worst_h <= 1e-10)) o.pass = false;
  os << "; homogeneity: 100 states, worst rel err " << fmt(worst_h);
  o.detail = os.str();
  return o;
}

Outcome c11(const Pass& p) {
  const auto& r = p.runs.at("prm");
  const bool descent = passed(r, "prm.descent");
  const bool lzero = passed(r, "prm.L_zero_stated");
  const CertificateReport* d = find(r, "prm.descent");
  return {descent && lzero, "descent " + status_of(r, "prm.descent") + " (measured " + fmt(d->measured) + " vs bound " +
                                fmt(d->theoretical) + "); L(0) = " + fmt(population_loss_at_zero(r.prm->teacher)) +
                                " vs stated 1/2: " + status_of(r, "prm.L_zero_stated")};
}

Outcome c12(const Pass& a, const Pass& b) {
  std::vector<std::string> diff;
  for (const auto& [k, v] : a.digests) {
    auto it = b.digests.find(k);
    if (it == b.digests.end() || it->second != v) diff.push_back(k);
  }
  const bool ok = diff.empty() && a.digests.size() == b.digests.size() && !a.digests.empty();
  return {ok, std::to_string(a.digests.size()) + " files compared, " + std::to_string(diff.size()) + " differ" +
                  (diff.empty() ? "" : " (first: " + diff.front() + ")")};
}

std::set<int> parse_ids(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.insert(std::stoi(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::string out = "acceptance_out", expect;
  app.add_option("--out", out, "Scratch directory for run outputs");
  app.add_option("--expect-fail", expect, "Comma-separated criteria known to fail");
  CLI11_PARSE(app, argc, argv);

  const auto t0 = std::chrono::steady_clock::now();
  Pass first{fs::path(out) / "pass1", {}, {}}, second{fs::path(out) / "pass2", {}, {}};
  fs::remove_all(out);
  run_all(first);
  const double secs1 = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run_all(second);

  std::vector<std::pair<int, Outcome>> rows = {{1, c1()},         {2, c2()},         {3, c3(first)},   {4, c4(first)},
                                               {5, c5(first)},    {6, c6(first)},    {7, c7(first)},   {8, c8(first)},
                                               {9, c9(first)},    {10, c10()},       {11, c11(first)}, {12, c12(first, second)}};
  std::set<int> failing;
  for (const auto& [id, o] : rows) {
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "\n";
    if (!o.pass) failing.insert(id);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "suite pass: " << fmt(secs1) << " s; total " << fmt(secs) << " s\n";
  const std::set<int> expected = parse_ids(expect);
  if (failing != expected) {
    std::cout << "failing set differs from --expect-fail\n";
    return 1;
  }
  return 0;
}
