#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stagewise/config.hpp"
#include "stagewise/diagnostics.hpp"
#include "stagewise/optim.hpp"
#include "stagewise/stability.hpp"

namespace stagewise {

/// Everything a run needs, materialized from a config.
struct Problem {
  Dataset train;
  std::optional<Dataset> validation;
  std::optional<Dataset> test;
  std::shared_ptr<const QuadraticProblem> quadratic;
  LossModel model;
  FeasibleSet set;
  WeightVector w0;
  /// Known optimal risk (quadratics) or nullopt.
  std::optional<double> f_star;
};

/// `seed` replaces the dataset seed of generated sources when given.
Problem build_problem(const ExperimentConfig& cfg, std::optional<std::uint64_t> data_seed = std::nullopt);

/// f_star from the problem when known, else from a (cached) reference run.
ReferenceSolution reference_for(const Problem& p, const ExperimentConfig& cfg, std::uint64_t seed);

/// Analytic stage schedule for a `start` algorithm entry. mu comes from
/// the entry or the quadratic; sigma2 from the loss model; eps0 = F_S(w0) - f*.
StageSchedule resolve_stage_schedule(const AlgorithmSpec& a, const Problem& p, double f_star);

/// Runs one algorithm entry with the given seed for `budget` iterations (sgd)
/// or its own schedule.
RunRecord run_algorithm(const AlgorithmSpec& a, const Problem& p, double f_star, std::uint64_t budget,
                        std::uint64_t seed, const RunOptions& opt);

/// 0 in the config means: the largest stage budget among `start`/`variant`
/// entries.
std::uint64_t resolve_budget(const ExperimentConfig& cfg, const Problem& p, double f_star);

void write_run_csv(std::ostream& out, const RunRecord& rec);

struct AggregateRow {
  std::string algorithm;
  std::uint64_t cumulative = 0;
  std::size_t seeds = 0;
  double mean_train = 0.0, std_train = 0.0;
  double mean_test = 0.0, std_test = 0.0;
  double mean_gap = 0.0, std_gap = 0.0;
};

/// Per-algorithm mean and standard deviation at every cumulative iteration
/// logged by all seeds.
std::vector<AggregateRow> aggregate(const std::vector<std::string>& names,
                                    const std::vector<std::vector<RunRecord>>& runs);
void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows);

struct CompareResult {
  std::vector<std::string> names;
  std::vector<std::vector<RunRecord>> runs;  // [algorithm][seed]
  std::vector<std::string> files;
};

/// One CSV per (algorithm, seed), aggregate.csv and plot_compare.py under
/// cfg.output.
CompareResult run_compare(const ExperimentConfig& cfg);

struct SweepPoint {
  double mu = 0.0;
  std::vector<std::optional<std::uint64_t>> sgd_iterations;    // per seed; nullopt: cap reached
  std::vector<std::optional<std::uint64_t>> start_iterations;
  std::vector<std::uint64_t> start_prescribed;                 // sum of T_k per seed
  double sgd_median = 0.0;
  double start_median = 0.0;
  double start_prescribed_median = 0.0;
};

struct SweepReport {
  std::vector<SweepPoint> points;
  double sgd_slope = 0.0;
  double start_slope = 0.0;
  double start_prescribed_slope = 0.0;
};

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// For each mu: SGD with eta_t = (2t+1)/(2 mu (t+1)^2) and START (convex
/// stage schedule) on gen_quadratic, iterations until the optimality gap first
/// drops to eps0 * target_ratio (SGD checked every step, START at stage
/// outputs). Slopes are fitted to the medians over seeds against 1/mu.
SweepReport run_scaling_sweep(const ExperimentConfig& base, const std::vector<double>& mu_values);
void write_sweep_csv(std::ostream& out, const SweepReport& rep);

RunRecord run_stage_by_validation(const ExperimentConfig& cfg, const ValidationRule& rule, std::uint64_t seed);

struct StabilityRow {
  std::string algorithm;
  StabilitySummary summary;
  double bound = 0.0;  // NaN when no closed form applies
};

std::vector<StabilityRow> run_stability(const ExperimentConfig& cfg);

struct DiagnoseResult {
  ReferenceSolution reference;
  AssumptionReport report;
};

DiagnoseResult run_diagnose(const ExperimentConfig& cfg);

/// Bound table rows for the bounds subcommand.
void write_bounds_table(std::ostream& out, const BoundsSpec& b);

/// Generates the configured dataset and writes it as libsvm to `path`, plus a
/// JSON sidecar with the generator parameters.
void generate_data(const ExperimentConfig& cfg, const std::string& path);

}  // namespace stagewise
