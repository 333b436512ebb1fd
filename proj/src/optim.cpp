#include "stagewise/optim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace stagewise {

DivergenceError::DivergenceError(std::size_t stage_, std::uint64_t iteration_, const std::string& detail)
    : NonFiniteError("divergence at stage " + std::to_string(stage_) + ", iteration " +
                     std::to_string(iteration_) + ": " + detail),
      stage(stage_),
      iteration(iteration_) {}

// ---------------------------------------------------------------- schedules

StepSchedule StepSchedule::one_over_t(double mu) {
  if (!(mu > 0.0) || !std::isfinite(mu)) throw std::invalid_argument("one_over_t: mu must be finite and > 0");
  return {ScheduleKind::poly_one_over_t, mu, {}, {}};
}

StepSchedule StepSchedule::inv_sqrt(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("inv_sqrt: c must be finite and > 0");
  return {ScheduleKind::poly_inv_sqrt, c, {}, {}};
}

StepSchedule StepSchedule::constant(double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("constant: eta must be finite and > 0");
  return {ScheduleKind::constant, eta, {}, {}};
}

StepSchedule StepSchedule::piecewise(std::vector<std::uint64_t> lengths, std::vector<double> values) {
  if (lengths.empty() || lengths.size() != values.size()) {
    throw std::invalid_argument("piecewise: need equal, nonempty lengths and values");
  }
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("piecewise: steps must be finite and > 0");
  }
  return {ScheduleKind::piecewise_constant, 0.0, std::move(lengths), std::move(values)};
}

double step_size(const StepSchedule& s, std::uint64_t t) {
  if (t < 1) throw std::invalid_argument("step_size: t must be >= 1");
  const double td = static_cast<double>(t);
  switch (s.kind) {
    case ScheduleKind::poly_one_over_t: return (2.0 * td + 1.0) / (2.0 * s.param * (td + 1.0) * (td + 1.0));
    case ScheduleKind::poly_inv_sqrt: return s.param / std::sqrt(td);
    case ScheduleKind::constant: return s.param;
    case ScheduleKind::piecewise_constant: {
      std::uint64_t end = 0;
      for (std::size_t k = 0; k < s.lengths.size(); ++k) {
        end += s.lengths[k];
        if (t <= end) return s.values[k];
      }
      return s.values.back();
    }
  }
  throw std::logic_error("step_size: bad kind");
}

const char* to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::poly_one_over_t: return "poly_one_over_t";
    case ScheduleKind::poly_inv_sqrt: return "poly_inv_sqrt";
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::piecewise_constant: return "piecewise_constant";
  }
  return "?";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "poly_one_over_t") return ScheduleKind::poly_one_over_t;
  if (name == "poly_inv_sqrt") return ScheduleKind::poly_inv_sqrt;
  if (name == "constant") return ScheduleKind::constant;
  if (name == "piecewise_constant") return ScheduleKind::piecewise_constant;
  throw std::invalid_argument("unknown schedule kind '" + std::string(name) + "'");
}

const char* to_string(ReturnOp op) {
  switch (op) {
    case ReturnOp::last: return "last";
    case ReturnOp::average: return "average";
    case ReturnOp::random_iterate: return "random_iterate";
  }
  return "?";
}

ReturnOp parse_return_op(std::string_view name) {
  if (name == "last") return ReturnOp::last;
  if (name == "average") return ReturnOp::average;
  if (name == "random_iterate") return ReturnOp::random_iterate;
  throw std::invalid_argument("unknown return op '" + std::string(name) + "'");
}

const char* to_string(Regime r) {
  switch (r) {
    case Regime::convex: return "convex";
    case Regime::quasi_convex: return "quasi_convex";
    case Regime::weakly_convex: return "weakly_convex";
    case Regime::practical: return "practical";
  }
  return "?";
}

Regime parse_regime(std::string_view name) {
  if (name == "convex") return Regime::convex;
  if (name == "quasi_convex") return Regime::quasi_convex;
  if (name == "weakly_convex") return Regime::weakly_convex;
  if (name == "practical") return Regime::practical;
  throw std::invalid_argument("unknown regime '" + std::string(name) + "'");
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::V1: return "V1";
    case Variant::V2: return "V2";
    case Variant::V3: return "V3";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "V1") return Variant::V1;
  if (name == "V2") return Variant::V2;
  if (name == "V3") return Variant::V3;
  throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

std::uint64_t StageSchedule::total_iterations() const {
  std::uint64_t s = 0;
  for (const auto& st : stages) s += st.iterations;
  return s;
}

std::vector<double> StageSchedule::etas() const {
  std::vector<double> out;
  for (const auto& st : stages) out.push_back(st.eta);
  return out;
}

std::vector<std::uint64_t> StageSchedule::lengths() const {
  std::vector<std::uint64_t> out;
  for (const auto& st : stages) out.push_back(st.iterations);
  return out;
}

double regime_budget_constant(Regime regime, double mu, double theta) {
  switch (regime) {
    case Regime::convex: return 1.5 / mu;
    case Regime::quasi_convex: return 1.5 / (theta * mu);
    case Regime::weakly_convex: return 1.0 / mu;
    case Regime::practical: break;
  }
  throw std::invalid_argument("regime_budget_constant: practical schedules have no budget constant");
}

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be finite and > 0");
}

// ceil that ignores a few ulps of rounding above an integer
std::uint64_t tolerant_ceil(double x) {
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x))) return static_cast<std::uint64_t>(std::max(1.0, r));
  return static_cast<std::uint64_t>(std::max(1.0, std::ceil(x)));
}

}  // namespace

StageSchedule make_stage_schedule(Regime regime, const RegimeInputs& in) {
  if (regime == Regime::practical) throw std::invalid_argument("make_stage_schedule: use practical_schedule");
  require_positive(in.eps0, "eps0");
  require_positive(in.target_eps, "target_eps");
  require_positive(in.mu, "mu");
  require_positive(in.L, "L");
  if (in.target_eps >= in.eps0) throw std::invalid_argument("target_eps must be < eps0 (K >= 1)");

  StageSchedule s;
  s.regime = regime;
  s.eps0 = in.eps0;
  s.target_eps = in.target_eps;
  s.mu = in.mu;
  s.L = in.L;
  s.sigma2 = in.sigma2;
  s.G = in.G;
  s.theta = in.theta;

  const auto K = static_cast<std::size_t>(tolerant_ceil(std::log2(in.eps0 / in.target_eps)));
  double gamma_min = 0.0;
  switch (regime) {
    case Regime::convex: {
      require_positive(in.sigma2, "sigma2");
      const double alpha_max = std::min(1.0, 3.0 * in.sigma2 / (in.eps0 * in.L));
      s.alpha = in.alpha.value_or(alpha_max);
      gamma_min = 1.5 / in.mu;
      s.return_op = ReturnOp::average;
      if (!(s.alpha > 0.0) || s.alpha > alpha_max * (1.0 + 1e-12)) {
        throw std::invalid_argument("alpha must lie in (0, min(1, 3 sigma2/(eps0 L))]");
      }
      break;
    }
    case Regime::quasi_convex: {
      require_positive(in.G, "G");
      require_positive(in.theta, "theta");
      s.alpha = 1.0;
      gamma_min = 1.5 / (in.theta * in.mu);
      s.return_op = ReturnOp::random_iterate;
      break;
    }
    case Regime::weakly_convex: {
      require_positive(in.sigma2, "sigma2");
      const double alpha_max = std::min(1.0, 2.0 * in.sigma2 / (in.eps0 * in.L));
      s.alpha = in.alpha.value_or(alpha_max);
      gamma_min = 4.0 / in.mu;
      s.return_op = ReturnOp::average;
      if (!(s.alpha > 0.0) || s.alpha > alpha_max * (1.0 + 1e-12)) {
        throw std::invalid_argument("alpha must lie in (0, min(1, 2 sigma2/(eps0 L))]");
      }
      if (in.gamma && std::abs(*in.gamma - gamma_min) > 1e-12 * gamma_min) {
        throw std::invalid_argument("weakly convex regime fixes gamma = 4/mu");
      }
      break;
    }
    case Regime::practical: break;
  }
  const double gamma = in.gamma.value_or(gamma_min);
  if (gamma < gamma_min * (1.0 - 1e-12)) {
    throw std::invalid_argument("gamma below the regime minimum " + std::to_string(gamma_min));
  }
  s.gamma = Gamma::finite(gamma);

  const double C = regime_budget_constant(regime, in.mu, in.theta);
  for (std::size_t k = 1; k <= K; ++k) {
    const double eps_k = in.eps0 / std::ldexp(1.0, static_cast<int>(k));
    double T_formula = 0.0;
    switch (regime) {
      case Regime::convex: T_formula = 9.0 * in.sigma2 / (2.0 * in.mu * eps_k * s.alpha); break;
      case Regime::quasi_convex: T_formula = 9.0 * in.G * in.G / (4.0 * in.mu * eps_k * in.theta * in.theta); break;
      case Regime::weakly_convex: T_formula = 4.0 * in.sigma2 / (in.mu * eps_k * s.alpha); break;
      case Regime::practical: break;
    }
    std::uint64_t T = tolerant_ceil(T_formula);
    double eta = C / static_cast<double>(T);
    if (eta > 1.0 / in.L) {
      T = tolerant_ceil(C * in.L);
      eta = C / static_cast<double>(T);
    }
    s.stages.push_back({eps_k, eta, T});
  }
  return s;
}

StageSchedule practical_schedule(Variant variant, const std::vector<std::uint64_t>& stage_lengths, double eta0,
                                 double decay, Gamma gamma) {
  if (stage_lengths.empty()) throw std::invalid_argument("stage_lengths must be nonempty");
  require_positive(eta0, "eta0");
  if (!(decay > 0.0 && decay < 1.0)) throw std::invalid_argument("decay must lie in (0, 1)");
  StageSchedule s;
  s.regime = Regime::practical;
  s.gamma = variant == Variant::V1 ? Gamma::infinite() : gamma;
  s.return_op = variant == Variant::V3 ? ReturnOp::average : ReturnOp::last;
  double eta = eta0;
  for (std::uint64_t T : stage_lengths) {
    if (T == 0) throw std::invalid_argument("stage lengths must be >= 1");
    s.stages.push_back({std::numeric_limits<double>::quiet_NaN(), eta, T});
    eta *= decay;
  }
  return s;
}

// ---------------------------------------------------------------- runner

namespace {

class Runner {
 public:
  Runner(const LossModel& m, const Dataset& ds, const FeasibleSet& set, RngStream& rng, const RunOptions& opt,
         std::uint64_t planned_total)
      : m_(m), ds_(ds), set_(set), rng_(rng), opt_(opt), train_(m, ds), planned_(planned_total), g_(ds.dimension()) {
    if (opt.test) test_.emplace(m, *opt.test);
  }

  bool stopped() const { return rec_.reached_at.has_value(); }
  std::uint64_t cumulative() const { return cumulative_; }
  RunRecord& record() { return rec_; }

  double train_error(const WeightVector& w) const { return train_(w); }

  void log(std::size_t stage, std::uint64_t t, double eta, const WeightVector& w, bool check_stop) {
    if (opt_.on_eval) opt_.on_eval(cumulative_, w);
    const double train = train_(w);
    if (opt_.record_log) {
      const double test = test_ ? (*test_)(w) : std::numeric_limits<double>::quiet_NaN();
      rec_.log.push_back({stage, t, cumulative_, eta, train, test});
    }
    if (check_stop && opt_.stop_below && train <= *opt_.stop_below && !stopped()) rec_.reached_at = cumulative_;
  }

  /// One projected (and possibly anchored) SGD step on the current iterate.
  void step(std::size_t stage, std::uint64_t t, WeightVector& w, const WeightVector& anchor, double eta, Gamma gamma) {
    const std::size_t i = draw_index(rng_, ds_.size());
    try {
      std::fill(g_.values().begin(), g_.values().end(), 0.0);
      add_loss_gradient(m_, w, ds_[i], 1.0, g_);
      prox_step_inplace(set_, w, anchor, g_, eta, gamma);
    } catch (const NonFiniteError& e) {
      throw DivergenceError(stage, t, e.what());
    }
    ++cumulative_;
  }

  /// Runs T steps of one stage from `w` (updated to the last iterate) and
  /// returns the stage output.
  template <class EtaFn>
  WeightVector stage(std::size_t k, WeightVector& w, const WeightVector& anchor, EtaFn eta_of, std::uint64_t T,
                     Gamma gamma, ReturnOp op, bool stop_inside, std::uint64_t t_offset = 0) {
    std::uint64_t tau = 0;
    WeightVector picked;
    if (op == ReturnOp::random_iterate) tau = peek_index(rng_, T, T) + 1;
    WeightVector avg;
    if (op == ReturnOp::average) avg = WeightVector(w.size());
    for (std::uint64_t t = 1; t <= T; ++t) {
      if (t == tau) picked = w;
      const double eta = eta_of(t);
      step(k, t_offset + t, w, anchor, eta, gamma);
      if (op == ReturnOp::average) {
        const double inv = 1.0 / static_cast<double>(t);
        for (std::size_t j = 0; j < w.size(); ++j) avg[j] += (w[j] - avg[j]) * inv;
      }
      if (opt_.eval_every > 0 && cumulative_ % opt_.eval_every == 0 && cumulative_ != planned_) {
        log(k, t_offset + t, eta, w, stop_inside);
        if (stop_inside && stopped()) return w;
      }
    }
    if (op == ReturnOp::random_iterate) {
      draw_index(rng_, T);
      return picked;
    }
    if (op == ReturnOp::average) return avg;
    return w;
  }

 private:
  const LossModel& m_;
  const Dataset& ds_;
  const FeasibleSet& set_;
  RngStream& rng_;
  const RunOptions& opt_;
  RiskEvaluator train_;
  std::optional<RiskEvaluator> test_;
  std::uint64_t planned_;
  std::uint64_t cumulative_ = 0;
  WeightVector g_;
  RunRecord rec_;
};

void check_start(const Dataset& ds, const FeasibleSet& set, const WeightVector& w0) {
  if (w0.size() != ds.dimension()) throw std::invalid_argument("w0 dimension differs from the dataset");
  w0.require_finite("w0");
  if (!set.contains(w0, 1e-9)) throw std::invalid_argument("w0 lies outside the feasible set");
}

}  // namespace

RunRecord sgd_run(const LossModel& m, const Dataset& ds, const FeasibleSet& set, const StepSchedule& s,
                  const WeightVector& w0, std::uint64_t T, RngStream& rng, const RunOptions& opt) {
  if (T < 1) throw std::invalid_argument("sgd_run: T must be >= 1");
  check_start(ds, set, w0);
  Runner run(m, ds, set, rng, opt, T);
  WeightVector w = w0;
  run.log(0, 0, 0.0, w, true);
  if (!run.stopped()) {
    run.stage(1, w, w0, [&](std::uint64_t t) { return step_size(s, t); }, T, Gamma::infinite(), ReturnOp::last,
              true);
  }
  auto& rec = run.record();
  rec.total_iterations = run.cumulative();
  if (!run.stopped()) {
    const double last_eta = step_size(s, T);
    run.log(1, T, last_eta, w, true);
    rec.stages.push_back({1, T, T, last_eta, w, run.train_error(w)});
  }
  rec.final_w = std::move(w);
  return std::move(rec);
}

RunRecord start_run(const LossModel& m, const Dataset& ds, const FeasibleSet& set, const StageSchedule& sched,
                    const WeightVector& w0, RngStream& rng, const RunOptions& opt) {
  if (sched.K() < 1) throw std::invalid_argument("start_run: schedule has no stages (K < 1)");
  for (const auto& st : sched.stages) {
    if (st.iterations < 1) throw std::invalid_argument("start_run: every stage needs T_k >= 1");
    require_positive(st.eta, "eta_k");
  }
  check_start(ds, set, w0);
  Runner run(m, ds, set, rng, opt, sched.total_iterations());
  WeightVector w = w0;
  WeightVector anchor = w0;
  run.log(0, 0, 0.0, w, true);

  for (std::size_t k = 1; k <= sched.K() && !run.stopped(); ++k) {
    const auto& st = sched.stages[k - 1];
    const double eta = st.eta;
    WeightVector out = run.stage(k, w, anchor, [eta](std::uint64_t) { return eta; }, st.iterations, sched.gamma,
                                 sched.return_op, false);
    const double err = run.train_error(out);
    run.record().stages.push_back({k, st.iterations, run.cumulative(), eta, out, err});
    if (opt.stop_below && err <= *opt.stop_below) run.record().reached_at = run.cumulative();
    anchor = out;
    w = std::move(out);
  }
  auto& rec = run.record();
  rec.total_iterations = run.cumulative();
  run.log(rec.stages.empty() ? 0 : rec.stages.size(), rec.stages.empty() ? 0 : rec.stages.back().iterations,
          rec.stages.empty() ? 0.0 : rec.stages.back().eta, w, false);
  rec.final_w = std::move(w);
  return std::move(rec);
}

RunRecord variant_run(const LossModel& m, const Dataset& ds, const FeasibleSet& set, Variant variant,
                      const std::vector<std::uint64_t>& stage_lengths, double eta0, double decay, Gamma gamma,
                      const WeightVector& w0, RngStream& rng, const RunOptions& opt) {
  return start_run(m, ds, set, practical_schedule(variant, stage_lengths, eta0, decay, gamma), w0, rng, opt);
}

// ---------------------------------------------------------------- validation

const char* to_string(ValidationMetric m) { return m == ValidationMetric::error_rate ? "error_rate" : "rmse"; }

ValidationMetric parse_validation_metric(std::string_view name) {
  if (name == "error_rate") return ValidationMetric::error_rate;
  if (name == "rmse") return ValidationMetric::rmse;
  throw std::invalid_argument("unknown validation metric '" + std::string(name) + "'");
}

double error_rate(const WeightVector& w, const Dataset& ds) {
  std::size_t wrong = 0;
  for (const auto& z : ds.examples()) {
    if (sparse_dot(w, z) * z.label <= 0.0) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(ds.size());
}

double rmse(const WeightVector& w, const Dataset& ds) {
  double s = 0.0;
  for (const auto& z : ds.examples()) {
    const double r = z.label - sparse_dot(w, z);
    s += r * r;
  }
  return std::sqrt(s / static_cast<double>(ds.size()));
}

RunRecord validation_stagewise_run(const LossModel& m, const Dataset& train, const Dataset& validation,
                                   const FeasibleSet& set, const ValidationRule& rule, const WeightVector& w0,
                                   RngStream& rng, const RunOptions& opt) {
  if (rule.budget < 1) throw std::invalid_argument("validation run: budget must be >= 1");
  if (rule.window < 1) throw std::invalid_argument("validation run: window must be >= 1");
  if (rule.max_stage_length < 1) throw std::invalid_argument("validation run: max_stage_length must be >= 1");
  if (!(rule.threshold >= 0.0)) throw std::invalid_argument("validation run: threshold must be >= 0");
  if (!(rule.decay > 0.0 && rule.decay < 1.0)) throw std::invalid_argument("validation run: decay must lie in (0, 1)");
  require_positive(rule.eta0, "eta0");
  if (rule.return_op == ReturnOp::random_iterate) {
    throw std::invalid_argument("validation run: random_iterate return is not supported");
  }
  if (validation.dimension() != train.dimension()) {
    throw std::invalid_argument("validation run: validation dimension differs from training");
  }
  check_start(train, set, w0);

  const auto metric = [&](const WeightVector& w) {
    return rule.metric == ValidationMetric::error_rate ? error_rate(w, validation) : rmse(w, validation);
  };
  const auto improved_enough = [&](double before, double after) {
    if (rule.threshold <= 0.0) return true;
    if (rule.metric == ValidationMetric::error_rate) return before - after >= rule.threshold;
    return before > 0.0 && (before - after) / before >= rule.threshold;
  };

  Runner run(m, train, set, rng, opt, rule.budget);
  WeightVector w = w0;
  WeightVector anchor = w0;
  run.log(0, 0, 0.0, w, false);
  double eta = rule.eta0;
  std::size_t k = 0;
  while (run.cumulative() < rule.budget) {
    ++k;
    std::uint64_t t = 0;
    double last_check = metric(w);
    WeightVector avg(w.size());
    bool stage_done = false;
    while (!stage_done && run.cumulative() < rule.budget) {
      const std::uint64_t len = std::min({rule.window, rule.max_stage_length - t, rule.budget - run.cumulative()});
      const double eta_now = eta;
      const WeightVector window_out = run.stage(k, w, anchor, [eta_now](std::uint64_t) { return eta_now; }, len,
                                                rule.gamma, rule.return_op, false, t);
      if (rule.return_op == ReturnOp::average) {
        // Merge the window mean into the stage mean.
        const double a = static_cast<double>(t) / static_cast<double>(t + len);
        for (std::size_t j = 0; j < w.size(); ++j) avg[j] = a * avg[j] + (1.0 - a) * window_out[j];
      }
      t += len;
      const double now = metric(w);
      if (!improved_enough(last_check, now) || t >= rule.max_stage_length) stage_done = true;
      last_check = now;
    }
    WeightVector out = rule.return_op == ReturnOp::average && t > 0 ? avg : w;
    run.record().stages.push_back({k, t, run.cumulative(), eta, out, run.train_error(out)});
    anchor = out;
    w = std::move(out);
    eta *= rule.decay;
  }
  auto& rec = run.record();
  rec.total_iterations = run.cumulative();
  run.log(k, rec.stages.empty() ? 0 : rec.stages.back().iterations, rec.stages.empty() ? 0.0 : rec.stages.back().eta, w,
          false);
  rec.final_w = std::move(w);
  return std::move(rec);
}

}  // namespace stagewise
