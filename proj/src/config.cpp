#include "stagewise/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace stagewise {

using nlohmann::json;

ConfigError::ConfigError(std::string field_, const std::string& message)
    : std::invalid_argument(field_ + ": " + message), field(std::move(field_)) {}

namespace {

/// Typed access to a JSON object that reports the dotted field path.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  Node child(const std::string& key) const {
    if (!has(key)) throw ConfigError(field(key), "missing");
    return Node(j_.at(key), field(key));
  }
  const json& raw(const std::string& key) const { return j_.at(key); }

  double number(const std::string& key) const {
    if (!has(key)) throw ConfigError(field(key), "missing");
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(field(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(field(key), "must be finite");
    return d;
  }
  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }
  std::optional<double> opt_number(const std::string& key) const {
    return has(key) ? std::optional<double>(number(key)) : std::nullopt;
  }
  double positive(const std::string& key) const {
    const double d = number(key);
    if (!(d > 0.0)) throw ConfigError(field(key), "must be > 0");
    return d;
  }
  double positive(const std::string& key, double fallback) const { return has(key) ? positive(key) : fallback; }

  std::uint64_t count(const std::string& key) const {
    if (!has(key)) throw ConfigError(field(key), "missing");
    const json& v = j_.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(field(key), "expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }
  std::uint64_t count(const std::string& key, std::uint64_t fallback) const { return has(key) ? count(key) : fallback; }

  std::string text(const std::string& key) const {
    if (!has(key)) throw ConfigError(field(key), "missing");
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(field(key), "expected a string");
    return v.get<std::string>();
  }
  std::string text(const std::string& key, const std::string& fallback) const { return has(key) ? text(key) : fallback; }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!j_.at(key).is_boolean()) throw ConfigError(field(key), "expected true or false");
    return j_.at(key).get<bool>();
  }

  template <class T>
  std::vector<T> list(const std::string& key) const {
    if (!has(key)) throw ConfigError(field(key), "missing");
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(field(key), "expected an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const json& e = v[i];
      const std::string f = field(key) + "[" + std::to_string(i) + "]";
      if constexpr (std::is_floating_point_v<T>) {
        if (!e.is_number() || !std::isfinite(e.get<double>())) throw ConfigError(f, "expected a finite number");
      } else {
        if (!e.is_number_integer() || e.get<long long>() < 0) throw ConfigError(f, "expected a nonnegative integer");
      }
      out.push_back(e.get<T>());
    }
    return out;
  }

  template <class Fn>
  auto parse(const std::string& key, Fn fn) const {
    const std::string name = text(key);
    try {
      return fn(name);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(field(key), e.what());
    }
  }

  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
};

DatasetSpec parse_dataset(const Node& n) {
  DatasetSpec d;
  const std::string src = n.text("source");
  if (src == "file") {
    d.source = DataSource::file;
    d.path = n.text("path");
    if (n.has("dimension")) d.dimension = n.count("dimension");
  } else if (src == "quadratic") {
    d.source = DataSource::quadratic;
    d.d = n.count("d", 50);
    d.n = n.count("n", 2000);
    d.mu = n.positive("mu", 0.01);
    d.L = n.positive("L", 1.0);
    d.noise = n.number("noise", 0.0);
    d.target_sigma2 = n.opt_number("target_sigma2");
    if (d.mu > d.L) throw ConfigError(n.field("mu"), "must not exceed L");
    if (d.n < d.d) throw ConfigError(n.field("n"), "must be >= d (infeasible spectrum)");
    if (d.noise < 0.0) throw ConfigError(n.field("noise"), "must be >= 0");
    if (d.target_sigma2 && *d.target_sigma2 < 0.0) throw ConfigError(n.field("target_sigma2"), "must be >= 0");
  } else if (src == "sparse_classification") {
    d.source = DataSource::sparse_classification;
    d.d = n.count("d", 1000);
    d.n = n.count("n", 2000);
    d.nnz = n.count("nnz", 10);
    d.flip = n.number("flip", 0.05);
    if (d.nnz < 1 || d.nnz > d.d) throw ConfigError(n.field("nnz"), "must lie in [1, d]");
    if (!(d.flip >= 0.0 && d.flip < 0.5)) throw ConfigError(n.field("flip"), "must lie in [0, 0.5)");
  } else {
    throw ConfigError(n.field("source"), "expected file, quadratic or sparse_classification");
  }
  if (d.source != DataSource::file && (d.d < 1 || d.n < 1)) throw ConfigError(n.field("d"), "d and n must be >= 1");
  d.seed = n.count("seed", 1);
  d.split.test_fraction = n.number("test_fraction", 0.0);
  d.split.validation_fraction = n.number("validation_fraction", 0.0);
  d.split.split_seed = n.count("split_seed", 0);
  if (!(d.split.test_fraction >= 0.0 && d.split.test_fraction < 1.0)) {
    throw ConfigError(n.field("test_fraction"), "must lie in [0, 1)");
  }
  if (!(d.split.validation_fraction >= 0.0 && d.split.validation_fraction < 1.0)) {
    throw ConfigError(n.field("validation_fraction"), "must lie in [0, 1)");
  }
  if (d.split.test_fraction + d.split.validation_fraction >= 1.0) {
    throw ConfigError(n.field("test_fraction"), "test and validation fractions must sum to < 1");
  }
  if (d.source == DataSource::quadratic && d.split.test_fraction + d.split.validation_fraction > 0.0) {
    throw ConfigError(n.field("test_fraction"), "quadratic datasets are used whole");
  }
  return d;
}

StepSchedule parse_schedule(const Node& n) {
  const ScheduleKind kind = n.parse("kind", parse_schedule_kind);
  switch (kind) {
    case ScheduleKind::poly_one_over_t: return StepSchedule::one_over_t(n.positive("mu"));
    case ScheduleKind::poly_inv_sqrt: return StepSchedule::inv_sqrt(n.positive("c"));
    case ScheduleKind::constant: return StepSchedule::constant(n.positive("eta"));
    case ScheduleKind::piecewise_constant: {
      const auto lengths = n.list<std::uint64_t>("lengths");
      const auto values = n.list<double>("values");
      try {
        return StepSchedule::piecewise(lengths, values);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(n.field("values"), e.what());
      }
    }
  }
  throw ConfigError(n.field("kind"), "unsupported");
}

AlgorithmSpec parse_algorithm(const Node& n, std::size_t index) {
  AlgorithmSpec a;
  a.name = n.text("name", "alg" + std::to_string(index));
  const std::string type = n.text("type");
  if (type == "sgd") {
    a.type = AlgorithmType::sgd;
    a.schedule = parse_schedule(n.child("schedule"));
    a.iterations = n.count("iterations", 0);
  } else if (type == "start") {
    a.type = AlgorithmType::start;
    a.regime = n.parse("regime", parse_regime);
    if (a.regime == Regime::practical) throw ConfigError(n.field("regime"), "use type \"variant\" for practical schedules");
    if (n.has("mu")) a.mu = n.positive("mu");
    if (n.has("gamma")) a.gamma = n.positive("gamma");
    if (n.has("alpha")) a.alpha = n.positive("alpha");
    a.theta = n.positive("theta", 1.0);
    a.target_ratio = n.positive("target_ratio", 1.0 / 64.0);
    if (a.target_ratio >= 1.0) throw ConfigError(n.field("target_ratio"), "must be < 1");
  } else if (type == "variant") {
    a.type = AlgorithmType::variant;
    a.variant = n.parse("variant", parse_variant);
    a.stage_lengths = n.list<std::uint64_t>("stage_lengths");
    if (a.stage_lengths.empty()) throw ConfigError(n.field("stage_lengths"), "must be nonempty");
    for (std::uint64_t T : a.stage_lengths) {
      if (T < 1) throw ConfigError(n.field("stage_lengths"), "entries must be >= 1");
    }
    a.eta0 = n.positive("eta0");
    a.decay = n.number("decay", 0.5);
    if (!(a.decay > 0.0 && a.decay < 1.0)) throw ConfigError(n.field("decay"), "must lie in (0, 1)");
    if (n.has("gamma")) a.gamma = n.positive("gamma");
    if (a.variant != Variant::V1 && !a.gamma) throw ConfigError(n.field("gamma"), "V2 and V3 need a finite gamma");
  } else if (type == "validation") {
    a.type = AlgorithmType::validation;
    ValidationRule& r = a.rule;
    r.window = n.count("window", 1000);
    r.threshold = n.number("threshold", 0.01);
    r.metric = n.has("metric") ? n.parse("metric", parse_validation_metric) : ValidationMetric::error_rate;
    r.max_stage_length = n.count("max_stage_length", 100000);
    r.eta0 = n.positive("eta0");
    r.decay = n.number("decay", 0.5);
    if (n.has("gamma")) r.gamma = Gamma::finite(n.positive("gamma"));
    r.return_op = n.has("return_op") ? n.parse("return_op", parse_return_op) : ReturnOp::last;
    if (r.window < 1) throw ConfigError(n.field("window"), "must be >= 1");
    if (r.threshold < 0.0) throw ConfigError(n.field("threshold"), "must be >= 0");
    if (r.max_stage_length < 1) throw ConfigError(n.field("max_stage_length"), "must be >= 1");
    if (!(r.decay > 0.0 && r.decay < 1.0)) throw ConfigError(n.field("decay"), "must lie in (0, 1)");
    if (r.return_op == ReturnOp::random_iterate) throw ConfigError(n.field("return_op"), "random_iterate unsupported");
  } else {
    throw ConfigError(n.field("type"), "expected sgd, start, variant or validation");
  }
  return a;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  const Node n(root, "");
  ExperimentConfig cfg;
  if (n.has("dataset")) cfg.dataset = parse_dataset(n.child("dataset"));

  if (n.has("loss")) {
    const Node l = n.child("loss");
    cfg.loss.kind = l.parse("kind", parse_loss_kind);
    cfg.loss.huber_delta = l.positive("huber_delta", 1.0);
    if (l.has("L")) cfg.loss.L = l.positive("L");
    if (l.has("G")) cfg.loss.G = l.positive("G");
    if (l.has("sigma2")) {
      cfg.loss.sigma2 = l.number("sigma2");
      if (*cfg.loss.sigma2 < 0.0) throw ConfigError(l.field("sigma2"), "must be >= 0");
    }
  }
  if ((cfg.loss.kind == LossKind::quadratic_synthetic) != (cfg.dataset.source == DataSource::quadratic)) {
    throw ConfigError("loss.kind", "quadratic_synthetic goes with a quadratic dataset and only with one");
  }

  if (n.has("set")) {
    const Node s = n.child("set");
    const SetKind kind = s.parse("kind", parse_set_kind);
    if (kind == SetKind::l1_ball) cfg.set = FeasibleSet::l1_ball(s.positive("radius"));
    if (kind == SetKind::l2_ball) cfg.set = FeasibleSet::l2_ball(s.positive("radius"));
  }

  if (n.has("algorithms")) {
    const json& arr = n.raw("algorithms");
    if (!arr.is_array()) throw ConfigError("algorithms", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      cfg.algorithms.push_back(parse_algorithm(Node(arr[i], "algorithms[" + std::to_string(i) + "]"), i));
    }
  }
  if (n.has("seeds")) {
    cfg.seeds = n.list<std::uint64_t>("seeds");
    if (cfg.seeds.empty()) throw ConfigError("seeds", "must be nonempty");
  }
  cfg.budget = n.count("budget", 0);
  cfg.eval_every = n.count("eval_every", 0);
  cfg.output = n.text("output", "out");

  if (n.has("sweep")) {
    const Node s = n.child("sweep");
    cfg.sweep.mu_values = s.list<double>("mu_values");
    for (double mu : cfg.sweep.mu_values) {
      if (!(mu > 0.0)) throw ConfigError(s.field("mu_values"), "entries must be > 0");
    }
    cfg.sweep.target_ratio = s.positive("target_ratio", 1.0 / 64.0);
    cfg.sweep.cap_factor = s.positive("cap_factor", 100.0);
  }
  if (n.has("stability")) {
    const Node s = n.child("stability");
    cfg.stability.trials = s.count("trials", 100);
    cfg.stability.pool_size = s.count("pool_size", 50);
    cfg.stability.convex = s.flag("convex", true);
    cfg.stability.write_traces = s.flag("write_traces", true);
    if (cfg.stability.trials < 1) throw ConfigError(s.field("trials"), "must be >= 1");
    if (cfg.stability.pool_size < 1) throw ConfigError(s.field("pool_size"), "must be >= 1");
  }
  if (n.has("diagnose")) {
    const Node s = n.child("diagnose");
    cfg.diagnose.probes = s.count("probes", 200);
    cfg.diagnose.lanczos_probes = s.count("lanczos_probes", 5);
    cfg.diagnose.lanczos_iters = s.count("lanczos_iters", 20);
    cfg.diagnose.reference_budget = s.count("reference_budget", 100000);
    cfg.diagnose.cache_dir = s.text("cache_dir", "");
    if (cfg.diagnose.lanczos_iters < 2) throw ConfigError(s.field("lanczos_iters"), "must be >= 2");
    if (cfg.diagnose.reference_budget < 1) throw ConfigError(s.field("reference_budget"), "must be >= 1");
  }
  if (n.has("bounds")) {
    const Node s = n.child("bounds");
    BoundsSpec& b = cfg.bounds;
    b.L = s.positive("L");
    b.G = s.positive("G");
    b.mu = s.positive("mu");
    if (s.has("n_values")) b.n_values = s.list<std::size_t>("n_values");
    if (s.has("T_values")) b.T_values = s.list<double>("T_values");
    if (s.has("gamma")) b.gamma = s.positive("gamma");
    if (s.has("etas")) b.etas = s.list<double>("etas");
    if (s.has("stage_lengths")) b.stage_lengths = s.list<std::uint64_t>("stage_lengths");
    b.c = s.positive("c", 1.0);
    if (b.etas.size() != b.stage_lengths.size()) throw ConfigError(s.field("etas"), "etas and stage_lengths differ in length");
    for (std::size_t v : b.n_values) {
      if (v < 1) throw ConfigError(s.field("n_values"), "entries must be >= 1");
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace stagewise
