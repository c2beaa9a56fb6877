#include "esc/partition.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "esc/digest.hpp"
#include "esc/errors.hpp"

namespace esc {

namespace {

constexpr std::size_t kKeptViolations = 25;

int sgn(double v) { return (v > 0.0) - (v < 0.0); }

bool is_true(Cell c) { return c == Cell::TL || c == Cell::TD; }
bool is_living(Cell c) { return c == Cell::TL || c == Cell::FL; }

const char* cell_name(Cell c) {
  switch (c) {
    case Cell::TL: return "TL";
    case Cell::TD: return "TD";
    case Cell::FL: return "FL";
    case Cell::FD: return "FD";
  }
  return "?";
}

PartitionSnapshot partition_from(const Mat& P, const Mat& YA, long long t, bool multi) {
  PartitionSnapshot s;
  s.t = t;
  s.n = static_cast<int>(P.rows());
  s.m = static_cast<int>(P.cols());
  s.cells.resize(static_cast<std::size_t>(s.n) * s.m);
  bool any_false = false;
  for (int i = 0; i < s.n; ++i)
    for (int k = 0; k < s.m; ++k) {
      const double ya = YA(i, k);
      if (ya == 0.0)
        throw DomainError("partition undefined: y_i^T a_k = 0 for sample " + std::to_string(i) + ", neuron " +
                          std::to_string(k));
      const bool tr = ya > 0.0;
      const bool living = P(i, k) > 0.0;
      any_false = any_false || !tr;
      s.cells[static_cast<std::size_t>(i) * s.m + k] =
          tr ? (living ? Cell::TL : Cell::TD) : (living ? Cell::FL : Cell::FD);
    }
  s.four_way = !multi || any_false;
  return s;
}

// Sign of the preactivation along the segment from p0 to p1 must equal ref
// at every sample point; `positive` additionally requires ref > 0.
bool segment_ok(double p0, double p1, int ref, bool positive) {
  if (ref == 0 || (positive && ref < 0)) return false;
  for (int j = 0; j < kSegmentPoints; ++j) {
    const double s = static_cast<double>(j) / (kSegmentPoints - 1);
    if (sgn((1.0 - s) * p0 + s * p1) != ref) return false;
  }
  return true;
}

void add_violation(DynamicsResult& res, const std::string& rule, long long t, int i, int k, const std::string& detail) {
  ++res.violation_counts[rule];
  if (res.violations.size() < kKeptViolations) res.violations.push_back({rule, t, i, k, detail});
}

}  // namespace

std::array<int, 4> PartitionSnapshot::counts(int i) const {
  std::array<int, 4> c{0, 0, 0, 0};
  for (int k = 0; k < m; ++k) ++c[static_cast<int>(at(i, k))];
  return c;
}

std::string PartitionSnapshot::digest() const {
  std::string buf(reinterpret_cast<const char*>(cells.data()), cells.size());
  buf += ":" + std::to_string(n) + "x" + std::to_string(m);
  return sha256_hex(buf);
}

PartitionSnapshot compute_partition(const Network& net, const LabeledDataset& ds, long long t) {
  if (ds.outputs() != net.outputs() || ds.d() != net.d()) throw InvalidArgument("partition: dataset does not match network");
  const Mat P = preactivations(net, ds.X);
  const Mat YA = ds.Y * net.A.transpose();
  return partition_from(P, YA, t, net.variant == Variant::Multi);
}

bool InitialPartitionStats::pass() const {
  for (const auto& s : stats)
    if (s.violations > 0) return false;
  return true;
}

InitialPartitionStats initial_partition_stats(const Network& net0, const LabeledDataset& ds, double delta) {
  if (net0.variant != Variant::Binary) throw WrongVariant("initial_partition_stats is defined for the binary network");
  const PartitionSnapshot part = compute_partition(net0, ds, 0);
  const int n = ds.n(), m = net0.m();
  InitialPartitionStats out;
  out.bound = std::sqrt(std::log(static_cast<double>(n) * n / delta) / (2.0 * m));
  const Cell kinds[4][2] = {{Cell::TL, Cell::TL}, {Cell::TL, Cell::TD}, {Cell::TD, Cell::TL}, {Cell::TD, Cell::TD}};
  for (const auto& kd : kinds) out.stats.push_back({std::string(cell_name(kd[0])) + "&" + cell_name(kd[1])});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (ds.labels[i] != ds.labels[j]) continue;
      ++out.pairs;
      const double theta = std::acos(std::clamp(ds.X.row(i).dot(ds.X.row(j)), -1.0, 1.0));
      for (int q = 0; q < 4; ++q) {
        int cnt = 0;
        for (int k = 0; k < m; ++k)
          if (part.at(i, k) == kinds[q][0] && part.at(j, k) == kinds[q][1]) ++cnt;
        const bool same = kinds[q][0] == kinds[q][1];
        const double expect = (same ? std::numbers::pi - theta : theta) / (4.0 * std::numbers::pi);
        const double dev = std::abs(static_cast<double>(cnt) / m - expect);
        auto& st = out.stats[q];
        if (dev > st.max_deviation || st.worst_i < 0) {
          st.max_deviation = std::max(st.max_deviation, dev);
          st.worst_i = i;
          st.worst_j = j;
        }
        if (dev > out.bound) ++st.violations;
      }
    }
  return out;
}

long long DynamicsResult::total_violations() const {
  long long s = 0;
  for (const auto& [k, v] : violation_counts) s += v;
  return s;
}

nlohmann::json DynamicsResult::to_json() const {
  nlohmann::json j;
  j["status"] = status;
  j["checks"] = checks;
  j["violation_counts"] = violation_counts;
  j["total_violations"] = total_violations();
  auto arr = nlohmann::json::array();
  for (const auto& v : violations)
    arr.push_back({{"rule", v.rule}, {"t", v.t}, {"i", v.i}, {"k", v.k}, {"detail", v.detail}});
  j["examples"] = arr;
  return j;
}

EarlyDynamicsChecker::EarlyDynamicsChecker(const LabeledDataset& ds, Variant variant, long long horizon)
    : ds_(ds), variant_(variant), horizon_(horizon) {}

void EarlyDynamicsChecker::violation(const std::string& rule, long long t, int i, int k, const std::string& detail) {
  add_violation(res_, rule, t, i, k, detail);
}

void EarlyDynamicsChecker::observe(const Network& net, long long t) { observe(net, preactivations(net, ds_.X), t); }

void EarlyDynamicsChecker::observe(const Network& net, const Mat& P, long long t) {
  if (t != last_t_ + 1) throw InvalidArgument("EarlyDynamicsChecker: states must be consecutive from t = 0");
  if (net.variant != variant_) throw WrongVariant("EarlyDynamicsChecker: network variant mismatch");
  const Mat YA = ds_.Y * net.A.transpose();
  PartitionSnapshot part = partition_from(P, YA, t, variant_ == Variant::Multi);
  if (t == 1) ref_pre_ = P;
  if (t >= 1 && t - 1 <= horizon_) {
    const long long tp = t - 1;
    const bool multi = variant_ == Variant::Multi;
    for (int i = 0; i < ds_.n(); ++i)
      for (int k = 0; k < net.m(); ++k) {
        const Cell before = prev_part_.at(i, k), after = part.at(i, k);
        if (before == Cell::TL) {
          ++res_.checks["S1"];
          if (after != Cell::TL) violation("S1", tp, i, k, std::string("TL -> ") + cell_name(after));
        }
        if (!multi && before == Cell::FD) {
          ++res_.checks["S2"];
          if (after != Cell::FD) violation("S2", tp, i, k, std::string("FD -> ") + cell_name(after));
        }
        if (tp == 0 && before == Cell::TD) {
          const std::string rule = multi ? "S2" : "S3";
          ++res_.checks[rule];
          if (after != Cell::TL) violation(rule, tp, i, k, std::string("TD(0) -> ") + cell_name(after));
        }
        if (!multi && tp == 0 && before == Cell::FL) {
          ++res_.checks["S4"];
          if (after != Cell::FD) violation("S4", tp, i, k, std::string("FL(0) -> ") + cell_name(after));
        }
        if (tp >= 1) {
          const std::string rule = multi ? "S3" : "S5";
          ++res_.checks[rule];
          if (!segment_ok(prev_pre_(i, k), P(i, k), sgn(ref_pre_(i, k)), multi))
            violation(rule, tp, i, k, "preactivation sign changes or vanishes on the segment");
        }
      }
  }
  prev_pre_ = std::move(P);
  prev_part_ = std::move(part);
  last_t_ = t;
}

DynamicsResult EarlyDynamicsChecker::result() const {
  DynamicsResult r = res_;
  if (last_t_ < 1) r.status = "insufficient-horizon";
  else r.status = r.total_violations() > 0 ? "violations" : "ok";
  return r;
}

GlobalDynamicsChecker::GlobalDynamicsChecker(const LabeledDataset& ds) : ds_(ds) {}

void GlobalDynamicsChecker::violation(const std::string& rule, long long t, int i, int k, const std::string& detail) {
  add_violation(res_, rule, t, i, k, detail);
}

void GlobalDynamicsChecker::observe(const Network& net, long long t) {
  if (t != last_t_ + 1) throw InvalidArgument("GlobalDynamicsChecker: states must be consecutive from t = 0");
  if (net.variant != Variant::Binary) throw WrongVariant("global dynamics rules are stated for the binary network");
  Mat P = preactivations(net, ds_.X);
  const Mat YA = ds_.Y * net.A.transpose();
  PartitionSnapshot part = partition_from(P, YA, t, false);
  const int n = ds_.n(), m = net.m();
  if (t == 0) {
    part0_ = part;
  } else if (t == 1) {
    ref_pre_ = P;
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < m; ++k) {
        const Cell c0 = part0_.at(i, k), c1 = part.at(i, k);
        auto need = [&](const char* rule, bool applies, bool ok, const char* what) {
          if (!applies) return;
          ++res_.checks[rule];
          if (!ok) violation(rule, 0, i, k, std::string(what) + ": " + cell_name(c0) + " -> " + cell_name(c1));
        };
        need("StageI-S1", c0 == Cell::TL, c1 == Cell::TL, "TL(0) not in TL(1)");
        need("StageI-S2", c0 == Cell::FD, c1 == Cell::FD, "FD(0) not in FD(1)");
        need("StageI-S3", c0 == Cell::TD, c1 == Cell::TL, "TD(0) not in TL(1)");
        need("StageI-S4", c0 == Cell::FL, c1 == Cell::FD, "FL(0) not in FD(1)");
        need("StageI-S5", true, c1 == Cell::TL || c1 == Cell::FD, "cell outside TL(1) u FD(1)");
        need("StageI-S6", true, (c1 == Cell::FD) == !is_true(c0) && (c1 == Cell::TL) == is_true(c0),
             "connectivity broken");
        ++res_.checks["StageI-S7"];
        if (P(i, k) == 0.0) violation("StageI-S7", 1, i, k, "b_k(1)^T x_i = 0");
      }
  } else {
    const long long tp = t - 1;
    for (int k = 0; k < m; ++k)
      for (int a = 0; a < net.outputs(); ++a) {
        ++res_.checks["StageII-S1"];
        const double before = prev_A_(k, a), after = net.A(k, a);
        const double s = before > 0.0 ? 1.0 : (before < 0.0 ? -1.0 : 0.0);
        if (!(after * s >= before * s)) violation("StageII-S1", tp, -1, k, "|a_k| decreased");
      }
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < m; ++k) {
        const Cell before = prev_part_.at(i, k), after = part.at(i, k);
        if (before == Cell::TL) {
          ++res_.checks["StageII-S2"];
          if (after != Cell::TL) violation("StageII-S2", tp, i, k, std::string("TL -> ") + cell_name(after));
        }
        if (before == Cell::FD) {
          ++res_.checks["StageII-S3"];
          if (after != Cell::FD) violation("StageII-S3", tp, i, k, std::string("FD -> ") + cell_name(after));
        }
        ++res_.checks["StageII-S4"];
        if (after != Cell::TL && after != Cell::FD)
          violation("StageII-S4", tp, i, k, std::string("cell ") + cell_name(after) + " at t+1");
        ++res_.checks["StageII-S5"];
        if (!segment_ok(prev_pre_(i, k), P(i, k), sgn(ref_pre_(i, k)), false))
          violation("StageII-S5", tp, i, k, "preactivation sign changes or vanishes on the segment");
      }
  }
  (void)is_living;
  prev_pre_ = std::move(P);
  prev_A_ = net.A;
  prev_part_ = std::move(part);
  last_t_ = t;
}

DynamicsResult GlobalDynamicsChecker::result() const {
  DynamicsResult r = res_;
  if (last_t_ < 1) r.status = "insufficient-horizon";
  else r.status = r.total_violations() > 0 ? "violations" : "ok";
  return r;
}

DynamicsResult check_dynamics_early(const std::vector<Network>& states, const LabeledDataset& ds, Variant variant,
                                    long long horizon) {
  EarlyDynamicsChecker chk(ds, variant, horizon);
  for (std::size_t t = 0; t < states.size(); ++t) chk.observe(states[t], static_cast<long long>(t));
  return chk.result();
}

DynamicsResult check_dynamics_global(const std::vector<Network>& states, const LabeledDataset& ds) {
  GlobalDynamicsChecker chk(ds);
  for (std::size_t t = 0; t < states.size(); ++t) chk.observe(states[t], static_cast<long long>(t));
  return chk.result();
}

ClassificationCheck check_correct_classification(const RunRecord& record) {
  ClassificationCheck c;
  for (const auto& s : record.steps) {
    if (s.t < 1) continue;
    if (!(s.min_margin > 0.0)) {
      c.pass = false;
      c.t = s.t;
      c.margin = s.min_margin;
      return c;
    }
  }
  return c;
}

ClassificationCheck check_correct_classification(const std::vector<Network>& states, const LabeledDataset& ds) {
  ClassificationCheck c;
  for (std::size_t t = 1; t < states.size(); ++t) {
    const Vec z = margins(states[t], ds);
    for (Eigen::Index i = 0; i < z.size(); ++i)
      if (!(z(i) > 0.0)) {
        c.pass = false;
        c.t = static_cast<long long>(t);
        c.i = static_cast<int>(i);
        c.margin = z(i);
        return c;
      }
  }
  return c;
}

void write_partition_counts_csv(const std::vector<PartitionSnapshot>& snaps, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << "t,i,TL,TD,FL,FD\n";
  for (const auto& s : snaps)
    for (int i = 0; i < s.n; ++i) {
      const auto c = s.counts(i);
      out << s.t << ',' << i << ',' << c[0] << ',' << c[1] << ',' << c[2] << ',' << c[3] << '\n';
    }
}

void write_partition_dump(const std::vector<PartitionSnapshot>& snaps, const std::string& path) {
  nlohmann::json header;
  header["encoding"] = "2 bits per cell, TL=0 TD=1 FL=2 FD=3, row-major n x m, 4 cells per byte low bits first";
  auto steps = nlohmann::json::array();
  for (const auto& s : snaps) steps.push_back(s.t);
  header["steps"] = steps;
  header["n"] = snaps.empty() ? 0 : snaps.front().n;
  header["m"] = snaps.empty() ? 0 : snaps.front().m;
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& s : snaps) {
    std::vector<unsigned char> packed((s.cells.size() + 3) / 4, 0);
    for (std::size_t q = 0; q < s.cells.size(); ++q)
      packed[q / 4] |= static_cast<unsigned char>(static_cast<unsigned>(s.cells[q]) << (2 * (q % 4)));
    out.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
  }
}

}  // namespace esc
