#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "stagewise/core.hpp"
#include "stagewise/geometry.hpp"
#include "stagewise/losses.hpp"

namespace stagewise {

/// A run produced a non-finite iterate. `stage` is 1-based (1 for plain SGD),
/// `iteration` is the 1-based step within the stage.
class DivergenceError : public NonFiniteError {
 public:
  DivergenceError(std::size_t stage, std::uint64_t iteration, const std::string& detail);
  std::size_t stage;
  std::uint64_t iteration;
};

enum class ScheduleKind { poly_one_over_t, poly_inv_sqrt, constant, piecewise_constant };

struct StepSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double param = 0.0;  // mu, c or eta depending on kind
  std::vector<std::uint64_t> lengths;  // piecewise_constant only
  std::vector<double> values;

  /// eta_t = (2t+1) / (2 mu (t+1)^2)
  static StepSchedule one_over_t(double mu);
  /// eta_t = c / sqrt(t)
  static StepSchedule inv_sqrt(double c);
  static StepSchedule constant(double eta);
  /// values[k] for lengths[k] consecutive steps; the last value persists.
  static StepSchedule piecewise(std::vector<std::uint64_t> lengths, std::vector<double> values);
};

double step_size(const StepSchedule& s, std::uint64_t t);
const char* to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);

enum class ReturnOp { last, average, random_iterate };
enum class Regime { convex, quasi_convex, weakly_convex, practical };

const char* to_string(ReturnOp op);
ReturnOp parse_return_op(std::string_view name);
const char* to_string(Regime r);
Regime parse_regime(std::string_view name);

struct StageParams {
  double epsilon = 0.0;  // target gap of the stage; NaN for practical schedules
  double eta = 0.0;
  std::uint64_t iterations = 0;
};

struct StageSchedule {
  Regime regime = Regime::practical;
  double eps0 = 0.0;
  double target_eps = 0.0;
  double mu = 0.0;
  double sigma2 = 0.0;
  double G = 0.0;
  double L = 0.0;
  double theta = 1.0;
  double alpha = 1.0;
  Gamma gamma = Gamma::infinite();
  ReturnOp return_op = ReturnOp::last;
  std::vector<StageParams> stages;

  std::size_t K() const { return stages.size(); }
  std::uint64_t total_iterations() const;
  std::vector<double> etas() const;
  std::vector<std::uint64_t> lengths() const;
};

/// Constants feeding an analytic stage schedule. Unset gamma and alpha
/// take the regime's boundary values; sigma2 is used by the convex and weakly
/// convex regimes and G by the quasi-convex regime.
struct RegimeInputs {
  double eps0 = 0.0;
  double target_eps = 0.0;
  double mu = 0.0;
  double L = 0.0;
  double sigma2 = 0.0;
  double G = 0.0;
  double theta = 1.0;
  std::optional<double> gamma;
  std::optional<double> alpha;
};

/// Per-stage (eps_k, eta_k, T_k) with eps_k = eps0 / 2^k, k = 1..K and
/// K = ceil(log2(eps0 / target_eps)). T_k is the formula value rounded up and
/// eta_k = C / T_k, so eta_k T_k = C (1.5/mu, 1.5/(theta mu) or 1/mu) and eta_k
/// never exceeds the formula. A stage whose eta_k would exceed 1/L is clamped to
/// T_k = ceil(C L), eta_k = C / T_k.
StageSchedule make_stage_schedule(Regime regime, const RegimeInputs& in);

/// Stage-constant product eta_k * T_k of a regime.
double regime_budget_constant(Regime regime, double mu, double theta);

enum class Variant { V1, V2, V3 };
const char* to_string(Variant v);
Variant parse_variant(std::string_view name);

/// eta_k = eta0 * decay^(k-1) over the given stage lengths. V1: infinite gamma
/// and last iterate; V2: given gamma, last iterate; V3: given gamma, average.
StageSchedule practical_schedule(Variant variant, const std::vector<std::uint64_t>& stage_lengths, double eta0,
                                 double decay, Gamma gamma);

struct LogEntry {
  std::size_t stage = 0;          // 1-based; 0 for the initial point
  std::uint64_t iteration = 0;    // step within the stage
  std::uint64_t cumulative = 0;
  double step_size = 0.0;
  double train_error = 0.0;
  double test_error = 0.0;        // NaN without a test set
};

struct StageSummary {
  std::size_t stage = 0;
  std::uint64_t iterations = 0;
  std::uint64_t cumulative_end = 0;
  double eta = 0.0;
  WeightVector output;
  double output_train_error = 0.0;
};

struct RunRecord {
  std::vector<LogEntry> log;
  std::vector<StageSummary> stages;
  WeightVector final_w;
  std::uint64_t total_iterations = 0;
  /// Set when RunOptions::stop_below was reached; the cumulative iteration of
  /// the first evaluation at or below the target.
  std::optional<std::uint64_t> reached_at;
};

struct RunOptions {
  /// Evaluate every this many cumulative iterations (0: only at the start,
  /// stage ends and the final point).
  std::uint64_t eval_every = 0;
  const Dataset* test = nullptr;
  /// Stop at the first evaluation whose training error is <= this value. For
  /// stagewise runs only stage outputs are checked.
  std::optional<double> stop_below;
  /// Skip intermediate log rows (stage summaries are still kept).
  bool record_log = true;
  /// Called at every evaluation point with the cumulative iteration and the
  /// evaluated iterate.
  std::function<void(std::uint64_t, const WeightVector&)> on_eval;
};

RunRecord sgd_run(const LossModel& m, const Dataset& ds, const FeasibleSet& set, const StepSchedule& s,
                  const WeightVector& w0, std::uint64_t T, RngStream& rng, const RunOptions& opt = {});

RunRecord start_run(const LossModel& m, const Dataset& ds, const FeasibleSet& set, const StageSchedule& sched,
                    const WeightVector& w0, RngStream& rng, const RunOptions& opt = {});

RunRecord variant_run(const LossModel& m, const Dataset& ds, const FeasibleSet& set, Variant variant,
                      const std::vector<std::uint64_t>& stage_lengths, double eta0, double decay, Gamma gamma,
                      const WeightVector& w0, RngStream& rng, const RunOptions& opt = {});

enum class ValidationMetric { error_rate, rmse };
const char* to_string(ValidationMetric m);
ValidationMetric parse_validation_metric(std::string_view name);

/// Classification error of sign(w.x) against the label (ties count as errors).
double error_rate(const WeightVector& w, const Dataset& ds);
double rmse(const WeightVector& w, const Dataset& ds);

struct ValidationRule {
  std::uint64_t window = 1000;
  /// Absolute improvement for error_rate, relative improvement for rmse.
  /// 0 disables early stage termination.
  double threshold = 0.01;
  ValidationMetric metric = ValidationMetric::error_rate;
  std::uint64_t max_stage_length = 100000;
  double eta0 = 0.1;
  double decay = 0.5;
  Gamma gamma = Gamma::infinite();
  ReturnOp return_op = ReturnOp::last;
  std::uint64_t budget = 0;
};

/// Stagewise run whose stages end when the validation metric, checked every
/// `window` steps, improves by less than the threshold since the previous
/// check; the step then decays by `decay`.
RunRecord validation_stagewise_run(const LossModel& m, const Dataset& train, const Dataset& validation,
                                   const FeasibleSet& set, const ValidationRule& rule, const WeightVector& w0,
                                   RngStream& rng, const RunOptions& opt = {});

}  // namespace stagewise
