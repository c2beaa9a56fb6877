#include "esc/training.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "esc/errors.hpp"
#include "esc/rng.hpp"

namespace esc {

LrSchedule LrSchedule::constant(double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("learning rate must be positive");
  LrSchedule s;
  s.kind = Kind::Constant;
  s.eta = eta;
  return s;
}

LrSchedule LrSchedule::loss_inverse(double eta0, double c) {
  if (!(eta0 > 0.0) || !(c > 0.0)) throw InvalidArgument("loss-inverse schedule needs eta0 > 0 and c > 0");
  LrSchedule s;
  s.kind = Kind::LossInverse;
  s.eta0 = eta0;
  s.c = c;
  return s;
}

LrSchedule LrSchedule::two_stage_poly(double eta0, double c, double c_prime, double r, long long T0) {
  if (!(eta0 > 0.0) || !(c > 0.0) || !(c_prime > 0.0)) throw InvalidArgument("two-stage schedule needs positive constants");
  if (T0 < 1) throw InvalidArgument("two-stage schedule needs T0 >= 1");
  LrSchedule s;
  s.kind = Kind::TwoStagePoly;
  s.eta0 = eta0;
  s.c = c;
  s.c_prime = c_prime;
  s.r = r;
  s.T0 = T0;
  return s;
}

double LrSchedule::at(long long t, double loss) const {
  switch (kind) {
    case Kind::Constant: return eta;
    case Kind::LossInverse: return t == 0 ? eta0 : c / loss;
    case Kind::TwoStagePoly: {
      if (t == 0) return eta0;
      const long long switch_at = force_stage2_at >= 1 ? force_stage2_at : T0;
      if (t < switch_at) return c / (static_cast<double>(t) * loss);
      return c_prime / std::pow(loss, 1.0 - 1.0 / (2.0 * r));
    }
  }
  return 0.0;
}

std::vector<std::string> LrSchedule::range_notes() const {
  std::vector<std::string> notes;
  const double eta0_max = 1.0 / (2.0 * std::sqrt(2.0));
  switch (kind) {
    case Kind::Constant:
      if (eta > 0.01) notes.push_back("eta > 0.01: out of theorem range");
      break;
    case Kind::LossInverse:
      if (c > 0.5) notes.push_back("c > 1/2: out of theorem range");
      if (eta0 > eta0_max) notes.push_back("eta0 > 1/(2 sqrt 2): out of theorem range");
      break;
    case Kind::TwoStagePoly: {
      const double cmax = 1.0 / (6.0 * (1.0 + 2.0 * eta0) * (1.0 + 2.0 * eta0) + 2.0);
      if (c > cmax) notes.push_back("c > 1/(6(1+2 eta0)^2 + 2): out of theorem range");
      if (r < 1.0) notes.push_back("r < 1: out of theorem range");
      if (eta0 > eta0_max) notes.push_back("eta0 > 1/(2 sqrt 2): out of theorem range");
      if (force_stage2_at >= 1) notes.push_back("stage 2 forced early: not theorem compliant");
      break;
    }
  }
  return notes;
}

nlohmann::json LrSchedule::to_json() const {
  nlohmann::json j;
  switch (kind) {
    case Kind::Constant:
      j = {{"kind", "constant"}, {"eta", eta}};
      break;
    case Kind::LossInverse:
      j = {{"kind", "loss-inverse"}, {"eta0", eta0}, {"c", c}};
      break;
    case Kind::TwoStagePoly:
      j = {{"kind", "two-stage-poly"}, {"eta0", eta0}, {"c", c}, {"c_prime", c_prime}, {"r", r}, {"T0", T0}};
      if (force_stage2_at >= 1) j["force_stage2_at"] = force_stage2_at;
      break;
  }
  j["range_notes"] = range_notes();
  return j;
}

long long two_stage_T0(int n, double V, double c) {
  if (!(V > 0.0) || !(c > 0.0)) return LLONG_MAX;
  const double lg = (2.0 / (V * c)) * std::log(n * std::log(2.0));
  if (lg >= std::log(9.0e18)) return LLONG_MAX;
  return static_cast<long long>(std::ceil(std::exp(lg)));
}

std::string status_name(RunStatus s) {
  switch (s) {
    case RunStatus::Completed: return "completed";
    case RunStatus::ConvergedExactly: return "converged-exactly";
    case RunStatus::Aborted: return "aborted";
  }
  return "?";
}

Network gd_step(const Network& net, const LabeledDataset& ds, LossKind loss, double eta, Layers layers) {
  return sgd_step(net, ds, loss, eta, all_indices(ds.n()), layers);
}

Network sgd_step(const Network& net, const LabeledDataset& ds, LossKind loss, double eta,
                 const std::vector<int>& batch, Layers layers) {
  if (!(eta > 0.0)) throw InvalidArgument("step size must be positive");
  const Vec g = grad_loss(net, ds, loss, batch, layers);
  if (!g.allFinite()) throw NumericalError("non-finite gradient");
  Network out = net;
  out.assign_flat(net.flatten() - eta * g);
  return out;
}

std::vector<int> draw_batch(const Batching& b, int n, long long t) {
  if (b.B < 1) throw InvalidArgument("batch size must be >= 1");
  CounterRng rng(b.seed, static_cast<std::uint64_t>(t));
  std::vector<int> idx(static_cast<std::size_t>(b.B));
  if (b.with_replacement) {
    for (auto& i : idx) i = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    return idx;
  }
  if (b.B > n) throw InvalidArgument("batch larger than dataset without replacement");
  std::vector<int> pool = all_indices(n);
  for (int r = 0; r < b.B; ++r) {
    const int j = r + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - r)));
    std::swap(pool[r], pool[j]);
    idx[r] = pool[r];
  }
  return idx;
}

RunRecord run(const Network& net0, const LabeledDataset& ds, LossKind loss, const LrSchedule& schedule,
              const TrainConfig& config, const Observer& observer) {
  check_compatible(net0, ds, loss);
  if (config.layers == Layers::InputOnly && net0.variant != Variant::Binary)
    throw WrongVariant("input-layer-only training is defined for the binary network");
  if (config.record_every < 1) throw InvalidArgument("record_every must be >= 1");
  if (config.steps < 0) throw InvalidArgument("steps must be >= 0");

  RunRecord rec;
  rec.variant = net0.variant;
  rec.loss = loss;
  rec.schedule = schedule;
  rec.config = config;
  Network net = net0;
  const Mat A0 = net0.A;
  const std::vector<int> full = all_indices(ds.n());

  for (long long t = 0;; ++t) {
    const Mat F = forward_batch(net, ds.X);
    const Vec z = F.cwiseProduct(ds.Y).rowwise().sum();
    KahanSum ls;
    for (Eigen::Index i = 0; i < z.size(); ++i) ls.add(loss_value(loss, z(i)));
    const double L = ls.value() / ds.n();

    StepRecord sr;
    sr.t = t;
    sr.loss = L;
    sr.min_margin = z.minCoeff();
    sr.max_margin = z.maxCoeff();
    sr.param_norm = param_norm(net);
    sr.max_abs_pred = F.cwiseAbs().maxCoeff();
    sr.max_pred = F.maxCoeff();
    sr.a_sign_ok = (net.A.array() * A0.array() > 0.0).all();
    const bool pred_ok = net.variant == Variant::Binary ? sr.max_abs_pred <= 1.0 : sr.max_pred <= 1.0;
    rec.hit_ok.push_back(pred_ok && sr.a_sign_ok ? 1 : 0);
    rec.last_step = t;
    if (config.keep_trajectory) rec.trajectory.push_back(net);

    auto finish = [&](RunStatus st, const std::string& detail) {
      rec.status = st;
      rec.status_detail = detail;
      rec.steps.push_back(sr);
      if (observer) {
        StepContext ctx;
        ctx.t = t;
        ctx.net = &net;
        ctx.loss = L;
        observer(ctx);
      }
    };

    if (!std::isfinite(L) || L < 0.0) {
      finish(RunStatus::Aborted, "non-finite loss at step " + std::to_string(t));
      break;
    }
    if (t == config.steps) {
      finish(RunStatus::Completed, "");
      break;
    }
    if (schedule.uses_loss() && L < 1e-14) {
      finish(RunStatus::ConvergedExactly, "loss below 1e-14 at step " + std::to_string(t));
      break;
    }
    const double eta = schedule.at(t, L);
    std::vector<int> batch = config.batching.kind == Batching::Kind::Full ? full : draw_batch(config.batching, ds.n(), t);
    const Vec g = grad_loss(net, ds, loss, batch, config.layers);
    sr.eta = eta;
    sr.grad_norm = g.norm();
    if (!g.allFinite() || !std::isfinite(eta)) {
      finish(RunStatus::Aborted, "non-finite gradient or step size at step " + std::to_string(t));
      break;
    }
    if (t % config.record_every == 0) rec.steps.push_back(sr);
    if (observer) {
      StepContext ctx;
      ctx.t = t;
      ctx.net = &net;
      ctx.loss = L;
      ctx.eta = eta;
      ctx.has_step = true;
      ctx.batch = &batch;
      ctx.grad = &g;
      observer(ctx);
    }
    net.assign_flat(net.flatten() - eta * g);
  }
  rec.measured_T = hitting_time_T(rec);
  return rec;
}

HittingTime hitting_time_from_flags(const std::vector<unsigned char>& ok) {
  HittingTime h;
  for (std::size_t s = 0; s < ok.size(); ++s) {
    if (!ok[s]) {
      h.T = static_cast<long long>(s) - 2;
      if (h.T < 0) h.T = -1;
      return h;
    }
  }
  h.censored = true;
  h.T = static_cast<long long>(ok.size()) - 2;
  if (h.T < 0) h.T = -1;
  return h;
}

HittingTime hitting_time_T(const RunRecord& record) { return hitting_time_from_flags(record.hit_ok); }

long long tstar(double eta, Variant variant) {
  if (!(eta > 0.0)) throw InvalidArgument("tstar: eta must be positive");
  const double base = variant == Variant::Binary ? 6.0 : 4.0;
  return static_cast<long long>(std::floor(std::log(base) / (4.0 * eta)));
}

long long exp_hitting_time_Te(double eta, int n, int m, double delta, Variant variant) {
  if (!(eta > 0.0 && eta < 0.5)) throw InvalidArgument("exp_hitting_time_Te: eta out of range");
  const double pre = variant == Variant::Binary
                         ? 0.5 + 2.0 * std::sqrt(std::log(2.0 * n * static_cast<double>(n) / delta) / m)
                         : 1.0;
  const double cap = variant == Variant::Binary ? 2.0 * std::sqrt(2.0) : 2.0;
  long long best = -1;
  for (long long t = 0; t < 100000000; ++t) {
    const double e = static_cast<double>(t + 1);
    const double grow = std::pow(1.0 + 2.0 * eta, 2.0 * e) - std::pow(1.0 - 2.0 * eta, 2.0 * e);
    const bool ok = pre * 251001.0 * grow / 1000000.0 <= 1.0 && std::pow(1.0 + 2.0 * eta, e) <= cap;
    if (!ok) break;
    best = t;
  }
  return best;
}

void write_steps_csv(const RunRecord& record, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << "t,loss,eta,grad_norm,min_margin,max_margin,param_norm,max_abs_pred,a_sign_ok\n";
  char line[512];
  for (const auto& s : record.steps) {
    std::snprintf(line, sizeof line, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", s.t, s.loss, s.eta,
                  s.grad_norm, s.min_margin, s.max_margin, s.param_norm, s.max_abs_pred, s.a_sign_ok ? 1 : 0);
    out << line;
  }
}

nlohmann::json run_summary(const RunRecord& record) {
  nlohmann::json j;
  j["variant"] = record.variant == Variant::Binary ? "binary" : "multi";
  j["loss"] = loss_key(record.loss);
  j["schedule"] = record.schedule.to_json();
  j["steps_requested"] = record.config.steps;
  j["last_step"] = record.last_step;
  j["status"] = status_name(record.status);
  if (!record.status_detail.empty()) j["status_detail"] = record.status_detail;
  j["measured_T"] = record.measured_T.T;
  j["measured_T_censored"] = record.measured_T.censored;
  if (!record.steps.empty()) {
    j["initial_loss"] = record.steps.front().loss;
    j["final_loss"] = record.steps.back().loss;
  }
  return j;
}

}  // namespace esc
