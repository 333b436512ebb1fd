#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "stagewise/core.hpp"
#include "stagewise/diagnostics.hpp"
#include "stagewise/geometry.hpp"
#include "stagewise/losses.hpp"
#include "stagewise/optim.hpp"

namespace stagewise {

/// Slack absorbed by the recurrence comparison.
inline constexpr double kRecurrenceSlack = 1e-9;

struct TwinStage {
  StepSchedule schedule;
  std::uint64_t iterations = 0;
  Gamma gamma = Gamma::infinite();
};

/// The algorithm both twins run: a list of anchored stages and a return op.
/// Stage k starts from, and is anchored at, the output of stage k-1.
struct TwinAlgorithm {
  std::vector<TwinStage> stages;
  ReturnOp return_op = ReturnOp::last;

  static TwinAlgorithm sgd(const StepSchedule& s, std::uint64_t T);
  static TwinAlgorithm from_schedule(const StageSchedule& sched);
};

enum class BoundBranch { same_sample, differing_sample, skipped };
const char* to_string(BoundBranch b);

struct TraceStep {
  std::size_t stage = 0;     // 1-based
  std::uint64_t t = 0;       // 1-based step within the stage
  double delta = 0.0;        // ||w_{t+1} - w'_{t+1}||
  double delta_prev = 0.0;   // ||w_t - w'_t||
  double delta_start = 0.0;  // distance at the first iterate of the stage
  bool same_sample = true;   // i_t != swap index
  double eta = 0.0;
  Gamma gamma = Gamma::infinite();
  BoundBranch branch = BoundBranch::skipped;
  double bound = 0.0;
  bool violation = false;
};

struct Violation {
  std::size_t stage = 0;
  std::uint64_t t = 0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct StabilityTrace {
  std::size_t swap_index = 0;
  std::vector<TraceStep> steps;
  std::vector<Violation> recurrence_violations;
  WeightVector final_w;
  WeightVector final_w_prime;
  /// Distance between the returned outputs.
  double final_delta = 0.0;
  /// Cumulative step (1-based) at which i_t first hit the swap index.
  std::optional<std::uint64_t> first_hit;
};

/// Runs `algo` in lock-step on ds and make_neighbor(ds, swap_index,
/// replacement) from the same w0 with one shared index stream.
StabilityTrace twin_run(const LossModel& m, const Dataset& ds, const FeasibleSet& set, std::size_t swap_index,
                        const SparseExample& replacement, const TwinAlgorithm& algo, const WeightVector& w0,
                        std::uint64_t seed);

/// Right-hand side of the per-step recurrence. Convex, same sample:
///   eta/(eta+gamma) d1 + gamma/(eta+gamma) dt
/// non-convex, same sample:
///   eta/(eta+gamma) d1 + gamma (1 + eta L)/(eta+gamma) dt
/// differing sample adds 2 eta gamma G/(eta+gamma). Infinite gamma takes the
/// limits (coefficients 0, 1 and 2 eta G).
double recurrence_bound(double delta_start, double delta_t, double eta, Gamma gamma, double L, double G,
                        bool same_sample, bool convex);

/// Annotates every step with its branch and bound and returns the violations
/// beyond kRecurrenceSlack. In convex mode a step with eta > 2/L is skipped.
std::vector<Violation> check_recurrence(StabilityTrace& trace, double L, double G, bool convex);

void write_trace_csv(std::ostream& out, const StabilityTrace& trace);

/// Convex: (L + 2 G^2 log(T+1)) / (n mu), requires n > L/mu.
/// Non-convex: ((1 + mu/L)/(n-1)) (2 G^2/mu)^(1/(L/mu+1)) T^((L/mu)/(L/mu+1)).
double bound_sgd_stability(double L, double G, double mu, std::size_t n, double T, bool convex);
/// 2 gamma G^2 sum_k (1 - (gamma/(eta_k+gamma))^T_k) / n, or 2 G^2 sum eta_k T_k / n
/// for infinite gamma.
double bound_start_stability(double G, Gamma gamma, const std::vector<double>& etas,
                             const std::vector<std::uint64_t>& Ts, std::size_t n);
/// S_prev/n + ((1 + mu/(L c))/(n-1)) (2 G^2 c/mu)^(1/(1+L c/mu)) T_k^((L c/mu)/(L c/mu+1))
double bound_start_nonconvex_stability(double L, double G, double mu, std::size_t n, double T_k, double S_prev,
                                       double c);

struct ErrorDecomposition {
  double train_error = 0.0;
  double test_error = 0.0;
  double generalization_gap = 0.0;
  double opt_gap = 0.0;
};

ErrorDecomposition decompose_error(const LossModel& m, const WeightVector& w, const Dataset& train,
                                   const Dataset& test, const ReferenceSolution& ref);

struct StabilityTrial {
  std::uint64_t seed = 0;
  std::size_t swap_index = 0;
  double final_delta = 0.0;
  /// max |f(w,z) - f(w',z)| over the probe set plus the swapped pair.
  double loss_change = 0.0;
  std::size_t violations = 0;
  std::size_t checked_steps = 0;
};

struct StabilitySummary {
  std::vector<StabilityTrial> trials;
  double mean_G_delta = 0.0;
  double mean_loss_change = 0.0;
  std::size_t total_steps = 0;
  std::size_t total_violations = 0;
};

/// Independent (seed, swap) trials: the swap index is uniform on {0..n-1} and
/// the replacement uniform over `pool`. Trials run concurrently.
StabilitySummary stability_experiment(const LossModel& m, const Dataset& ds, const Dataset& pool,
                                      const FeasibleSet& set, const TwinAlgorithm& algo, const WeightVector& w0,
                                      std::size_t trials, std::uint64_t base_seed, bool convex);

}  // namespace stagewise
