#include "esc/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace esc::cli {

namespace {

using nlohmann::json;

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw ConfigError(where + ": " + what);
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string where(const std::string& key) const { return path_ + "." + key; }

  std::string str(const std::string& key) {
    if (!has(key)) fail(where(key), "required field missing");
    const json& v = raw(key);
    if (!v.is_string()) fail(where(key), "expected a string");
    return v.get<std::string>();
  }
  std::string str_or(const std::string& key, const std::string& dflt) { return has(key) ? str(key) : dflt; }

  double num(const std::string& key) {
    if (!has(key)) fail(where(key), "required field missing");
    const json& v = raw(key);
    if (!v.is_number()) fail(where(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(where(key), "expected a finite number");
    return x;
  }
  double num_or(const std::string& key, double dflt) { return has(key) ? num(key) : dflt; }

  long long integer(const std::string& key) {
    if (!has(key)) fail(where(key), "required field missing");
    const json& v = raw(key);
    if (!v.is_number_integer()) fail(where(key), "expected an integer");
    return v.get<long long>();
  }
  long long int_or(const std::string& key, long long dflt) { return has(key) ? integer(key) : dflt; }
  int positive_int(const std::string& key) {
    const long long v = integer(key);
    if (v < 1 || v > 1'000'000'000) fail(where(key), "expected a positive integer");
    return static_cast<int>(v);
  }

  std::uint64_t u64(const std::string& key) {
    if (!has(key)) fail(where(key), "required field missing");
    const json& v = raw(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      fail(where(key), "expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }
  std::optional<std::uint64_t> opt_u64(const std::string& key) {
    return has(key) ? std::optional<std::uint64_t>(u64(key)) : std::nullopt;
  }

  bool boolean_or(const std::string& key, bool dflt) {
    if (!has(key)) return dflt;
    const json& v = raw(key);
    if (!v.is_boolean()) fail(where(key), "expected true or false");
    return v.get<bool>();
  }

  // A number, or the string "auto" meaning "derive it".
  std::optional<double> num_or_auto(const std::string& key) {
    if (!has(key)) fail(where(key), "required field missing (a number or \"auto\")");
    const json& v = raw(key);
    if (v.is_string() && v.get<std::string>() == "auto") return std::nullopt;
    if (!v.is_number()) fail(where(key), "expected a number or \"auto\"");
    return v.get<double>();
  }

  Reader sub(const std::string& key) { return Reader(raw(key), where(key)); }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) fail(where(k), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void check_choice(const std::string& where, const std::string& v, std::initializer_list<const char*> options) {
  for (const char* o : options)
    if (v == o) return;
  std::string all;
  for (const char* o : options) all += std::string(all.empty() ? "" : ", ") + o;
  Reader::fail(where, "\"" + v + "\" is not one of " + all);
}

DatasetSpec parse_dataset(Reader r) {
  DatasetSpec d;
  d.source = r.str("source");
  check_choice(r.where("source"), d.source, {"orthant", "concentrated", "mnist", "cifar10"});
  if (d.source == "orthant" || d.source == "concentrated") {
    d.n = r.positive_int("n");
    d.d = r.positive_int("d");
    d.seed = r.opt_u64("seed");
    if (d.source == "orthant") {
      d.antipodal = r.boolean_or("antipodal", true);
      d.mirror = r.boolean_or("mirror", false);
    } else {
      d.classes = r.positive_int("classes");
    }
  } else {
    d.count = r.positive_int("count");
    d.normalize = r.boolean_or("normalize", true);
    if (d.source == "mnist") {
      d.images = r.str_or("images", "");
      d.labels = r.str_or("labels", "");
    } else {
      d.path = r.str("path");
    }
  }
  r.finish();
  return d;
}

ModelSpec parse_model(Reader r) {
  ModelSpec m;
  m.m = r.positive_int("m");
  m.kappa = r.num_or_auto("kappa");
  if (m.kappa && !(*m.kappa > 0.0)) Reader::fail(r.where("kappa"), "must be positive");
  m.seed = r.opt_u64("seed");
  r.finish();
  return m;
}

ScheduleSpec parse_schedule(Reader r) {
  ScheduleSpec s;
  s.kind = r.str("kind");
  check_choice(r.where("kind"), s.kind, {"constant", "loss-inverse", "two-stage-poly"});
  if (s.kind == "constant") {
    s.eta = r.num("eta");
    if (!(s.eta > 0.0)) Reader::fail(r.where("eta"), "must be positive");
  } else {
    s.eta0 = r.num("eta0");
    s.c = r.num("c");
    if (!(s.eta0 > 0.0)) Reader::fail(r.where("eta0"), "must be positive");
    if (!(s.c > 0.0)) Reader::fail(r.where("c"), "must be positive");
    if (s.kind == "two-stage-poly") {
      s.c_prime = r.num("c_prime");
      s.r = r.num("r");
      if (!(s.c_prime > 0.0)) Reader::fail(r.where("c_prime"), "must be positive");
      if (r.has("T0")) {
        const json& v = r.raw("T0");
        if (v.is_string() && v.get<std::string>() == "auto") {
        } else if (v.is_number_integer() && v.get<long long>() >= 1) {
          s.T0 = v.get<long long>();
        } else {
          Reader::fail(r.where("T0"), "expected a positive integer or \"auto\"");
        }
      }
      s.force_stage2_at = r.int_or("force_stage2_at", -1);
    }
  }
  r.finish();
  return s;
}

TrainSpec parse_train(Reader r) {
  TrainSpec t;
  t.steps = r.integer("steps");
  if (t.steps < 0) Reader::fail(r.where("steps"), "must be nonnegative");
  t.batching = r.str_or("batching", "full");
  check_choice(r.where("batching"), t.batching, {"full", "stochastic"});
  if (t.batching == "stochastic") {
    t.batch_size = r.positive_int("batch_size");
    t.batch_seed = r.opt_u64("batch_seed");
    t.with_replacement = r.boolean_or("with_replacement", true);
  }
  t.layers = r.str_or("layers", "all");
  check_choice(r.where("layers"), t.layers, {"all", "input-only"});
  t.record_every = r.has("record_every") ? r.positive_int("record_every") : 1;
  r.finish();
  return t;
}

CheckSpec parse_checks(Reader r) {
  CheckSpec c;
  c.gram = r.boolean_or("gram", true);
  c.hessian_points = static_cast<int>(r.int_or("hessian_points", 0));
  if (c.hessian_points < 0) Reader::fail(r.where("hessian_points"), "must be nonnegative");
  c.hessian_max_params = static_cast<int>(r.int_or("hessian_max_params", 4000));
  if (c.hessian_max_params < 1) Reader::fail(r.where("hessian_max_params"), "must be positive");
  c.partition_dump = r.boolean_or("partition_dump", false);
  r.finish();
  return c;
}

PrmSpec parse_prm(Reader r) {
  PrmSpec p;
  p.d = r.positive_int("d");
  p.m = r.positive_int("m");
  p.M = r.positive_int("M");
  p.kappa = r.num("kappa");
  p.eta = r.num_or_auto("eta");
  p.steps = r.integer("steps");
  if (p.steps < 0) Reader::fail(r.where("steps"), "must be nonnegative");
  p.seed = r.opt_u64("seed");
  r.finish();
  return p;
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& j) {
  Reader r(j, "config");
  ExperimentConfig c;
  c.kind = r.str("kind");
  check_choice(r.where("kind"), c.kind,
               {"early-binary", "early-multiclass", "global-poly", "global-exp", "prm", "certify-only"});
  c.seed = r.has("seed") ? r.u64("seed") : 0;
  if (r.has("delta")) {
    c.delta = r.num("delta");
    if (!(*c.delta > 0.0 && *c.delta < 1.0)) Reader::fail(r.where("delta"), "must lie in (0, 1)");
  }
  if (r.has("dataset")) c.dataset = parse_dataset(r.sub("dataset"));
  if (r.has("model")) c.model = parse_model(r.sub("model"));
  c.loss = r.str_or("loss", "");
  if (!c.loss.empty()) check_choice(r.where("loss"), c.loss, {"quadratic", "exp", "logistic", "hinge"});
  if (r.has("schedule")) c.schedule = parse_schedule(r.sub("schedule"));
  if (r.has("train")) c.train = parse_train(r.sub("train"));
  if (r.has("checks")) c.checks = parse_checks(r.sub("checks"));
  if (r.has("prm")) c.prm = parse_prm(r.sub("prm"));
  r.finish();

  const bool trains = c.kind != "prm" && c.kind != "certify-only";
  if (trains) {
    if (!c.dataset) Reader::fail("config.dataset", "required for " + c.kind);
    if (!c.model) Reader::fail("config.model", "required for " + c.kind);
    if (!c.schedule) Reader::fail("config.schedule", "required for " + c.kind);
    if (!c.delta) Reader::fail("config.delta", "required for " + c.kind);
    if (c.loss.empty()) Reader::fail("config.loss", "required for " + c.kind);
    if (!j.contains("train")) Reader::fail("config.train", "required for " + c.kind);
  }
  if (c.kind == "prm" && !c.prm) Reader::fail("config.prm", "required for prm");
  if (c.kind == "certify-only" && c.dataset && !c.delta) Reader::fail("config.delta", "required with a dataset");
  const bool binary_kind = c.kind == "early-binary" || c.kind == "global-poly" || c.kind == "global-exp";
  if (c.dataset && binary_kind && c.dataset->source != "orthant")
    Reader::fail("config.dataset.source", c.kind + " needs binary separable data (orthant)");
  if (c.dataset && c.kind == "early-multiclass" && c.dataset->source == "orthant")
    Reader::fail("config.dataset.source", "early-multiclass needs one-hot data");
  if (c.schedule) {
    if (c.kind.rfind("early", 0) == 0 && c.schedule->kind != "constant")
      Reader::fail("config.schedule.kind", c.kind + " uses a constant learning rate");
    if (c.kind == "global-exp" && c.schedule->kind != "loss-inverse")
      Reader::fail("config.schedule.kind", "global-exp uses the loss-inverse schedule");
    if (c.kind == "global-poly" && c.schedule->kind != "two-stage-poly")
      Reader::fail("config.schedule.kind", "global-poly uses the two-stage-poly schedule");
  }
  if (c.train.layers == "input-only" && c.kind == "early-multiclass")
    Reader::fail("config.train.layers", "input-only training is defined for the binary network");
  return c;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) { return parse_config(read_json_file(path)); }

nlohmann::json config_to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json j;
  j["kind"] = c.kind;
  j["seed"] = c.seed;
  if (c.delta) j["delta"] = *c.delta;
  if (c.dataset) {
    const auto& d = *c.dataset;
    json dj = {{"source", d.source}};
    if (d.source == "orthant" || d.source == "concentrated") {
      dj["n"] = d.n;
      dj["d"] = d.d;
      if (d.seed) dj["seed"] = *d.seed;
      if (d.source == "orthant") {
        dj["antipodal"] = d.antipodal;
        dj["mirror"] = d.mirror;
      } else {
        dj["classes"] = d.classes;
      }
    } else {
      dj["count"] = d.count;
      dj["normalize"] = d.normalize;
      if (d.source == "mnist") {
        if (!d.images.empty()) dj["images"] = d.images;
        if (!d.labels.empty()) dj["labels"] = d.labels;
      } else {
        dj["path"] = d.path;
      }
    }
    j["dataset"] = dj;
  }
  if (c.model) {
    json mj = {{"m", c.model->m}};
    mj["kappa"] = c.model->kappa ? json(*c.model->kappa) : json("auto");
    if (c.model->seed) mj["seed"] = *c.model->seed;
    j["model"] = mj;
  }
  if (!c.loss.empty()) j["loss"] = c.loss;
  if (c.schedule) {
    const auto& s = *c.schedule;
    json sj = {{"kind", s.kind}};
    if (s.kind == "constant") {
      sj["eta"] = s.eta;
    } else {
      sj["eta0"] = s.eta0;
      sj["c"] = s.c;
      if (s.kind == "two-stage-poly") {
        sj["c_prime"] = s.c_prime;
        sj["r"] = s.r;
        sj["T0"] = s.T0 ? json(*s.T0) : json("auto");
        if (s.force_stage2_at >= 1) sj["force_stage2_at"] = s.force_stage2_at;
      }
    }
    j["schedule"] = sj;
  }
  if (c.kind != "prm" && c.kind != "certify-only") {
    json tj = {{"steps", c.train.steps}, {"batching", c.train.batching}, {"layers", c.train.layers},
               {"record_every", c.train.record_every}};
    if (c.train.batching == "stochastic") {
      tj["batch_size"] = c.train.batch_size;
      tj["with_replacement"] = c.train.with_replacement;
      if (c.train.batch_seed) tj["batch_seed"] = *c.train.batch_seed;
    }
    j["train"] = tj;
    j["checks"] = {{"gram", c.checks.gram},
                   {"hessian_points", c.checks.hessian_points},
                   {"hessian_max_params", c.checks.hessian_max_params},
                   {"partition_dump", c.checks.partition_dump}};
  }
  if (c.prm) {
    const auto& p = *c.prm;
    json pj = {{"d", p.d}, {"m", p.m}, {"M", p.M}, {"kappa", p.kappa}, {"steps", p.steps}};
    pj["eta"] = p.eta ? json(*p.eta) : json("auto");
    if (p.seed) pj["seed"] = *p.seed;
    j["prm"] = pj;
  }
  return j;
}

std::size_t SweepSpec::size() const {
  std::size_t s = 1;
  for (const auto& a : axes) s *= a.values.size();
  return s;
}

nlohmann::json SweepSpec::entry(std::size_t index, std::vector<nlohmann::json>* values) const {
  nlohmann::json cfg = base;
  std::vector<std::size_t> pick(axes.size());
  for (std::size_t q = axes.size(); q-- > 0;) {
    pick[q] = index % axes[q].values.size();
    index /= axes[q].values.size();
  }
  if (values) values->clear();
  for (std::size_t q = 0; q < axes.size(); ++q) {
    const auto& v = axes[q].values[pick[q]];
    cfg[nlohmann::json::json_pointer(axes[q].pointer)] = v;
    if (values) values->push_back(v);
  }
  return cfg;
}

SweepSpec parse_sweep(const nlohmann::json& j) {
  Reader r(j, "sweep");
  SweepSpec s;
  s.base = r.raw("base");
  parse_config(s.base);
  const nlohmann::json& axes = r.raw("axes");
  if (!axes.is_array() || axes.empty()) Reader::fail("sweep.axes", "expected a nonempty array");
  for (std::size_t q = 0; q < axes.size(); ++q) {
    Reader ar(axes[q], "sweep.axes[" + std::to_string(q) + "]");
    SweepAxis a;
    a.pointer = ar.str("param");
    try {
      (void)nlohmann::json::json_pointer(a.pointer);
    } catch (const nlohmann::json::exception&) {
      Reader::fail(ar.where("param"), "not a JSON pointer");
    }
    const nlohmann::json& vals = ar.raw("values");
    if (!vals.is_array() || vals.empty()) Reader::fail(ar.where("values"), "expected a nonempty array");
    a.values.assign(vals.begin(), vals.end());
    ar.finish();
    s.axes.push_back(std::move(a));
  }
  r.finish();
  std::size_t total = 1;
  for (const auto& a : s.axes) {
    total *= a.values.size();
    if (total > kMaxSweepEntries) Reader::fail("sweep.axes", "cross product exceeds 10000 entries");
  }
  for (std::size_t i = 0; i < total; ++i) {
    try {
      parse_config(s.entry(i));
    } catch (const ConfigError& e) {
      throw ConfigError("sweep entry " + std::to_string(i) + ": " + e.what());
    }
  }
  return s;
}

SweepSpec load_sweep(const std::string& path) { return parse_sweep(read_json_file(path)); }

}  // namespace esc::cli
