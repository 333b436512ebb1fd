#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stagewise/core.hpp"
#include "stagewise/geometry.hpp"
#include "stagewise/losses.hpp"

namespace stagewise {

/// Floor on gaps and distances below which the ratios are not evaluated.
inline constexpr double kRatioFloor = 1e-10;

/// A ratio was requested where its denominator is below kRatioFloor.
class BelowFloorError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct ReferenceSolution {
  WeightVector w_star;
  double f_star = 0.0;
  std::string provenance;

  friend bool operator==(const ReferenceSolution&, const ReferenceSolution&) = default;
};

std::string serialize_reference(const ReferenceSolution& ref);
ReferenceSolution parse_reference(const std::string& text);

/// grad F_S(w).(w - w*) / (F_S(w) - f*)
double theta_ratio(const LossModel& m, const Dataset& ds, const WeightVector& w, const ReferenceSolution& ref);
/// (F_S(w) - f*) / (2 ||w - w*||^2)
double mu_ratio(const LossModel& m, const Dataset& ds, const WeightVector& w, const ReferenceSolution& ref);

/// Central difference of full gradients with h = sqrt(eps) (1 + ||w||) / ||v||.
WeightVector hessian_vector_product(const LossModel& m, const Dataset& ds, const WeightVector& w,
                                    const WeightVector& v);

using LinearOperator = std::function<WeightVector(const WeightVector&)>;

struct LanczosResult {
  double min_eig = 0.0;
  std::size_t iterations = 0;  // Krylov dimension actually built
  bool breakdown = false;      // stopped early on a vanishing beta
  std::vector<double> ritz_values;
};

/// Smallest Ritz value after `iters` Lanczos steps with full
/// reorthogonalization, starting from a Gaussian vector drawn from rng.
LanczosResult lanczos_min_eig(const LinearOperator& op, std::size_t d, std::size_t iters, RngStream rng);
LanczosResult lanczos_min_eig(const LossModel& m, const Dataset& ds, const WeightVector& w, std::size_t iters,
                              RngStream rng);

/// Long stagewise (V1) run with eta0 = 1/L halved over 20 equal stages. The
/// returned point is the best of w0 and the stage outputs.
ReferenceSolution compute_reference(const LossModel& m, const Dataset& ds, const FeasibleSet& set,
                                    std::uint64_t budget, RngStream rng,
                                    std::optional<WeightVector> w0 = std::nullopt);

/// compute_reference memoized in `cache_dir`, keyed by dataset hash, loss kind
/// and feasible set.
ReferenceSolution cached_reference(const LossModel& m, const Dataset& ds, const FeasibleSet& set,
                                   std::uint64_t budget, RngStream rng, const std::string& cache_dir);

struct ProbeResult {
  std::size_t probe_index = 0;
  std::uint64_t cumulative = 0;
  double theta = 0.0;     // NaN when below floor
  double mu = 0.0;        // NaN when below floor
  double f_gap = 0.0;
  double distance_sq = 0.0;
  bool below_floor = false;
};

struct LanczosProbe {
  std::size_t probe_index = 0;
  LanczosResult result;
};

struct AssumptionReport {
  std::vector<ProbeResult> probes;
  std::vector<LanczosProbe> lanczos;
  double theta_min = 0.0;
  double theta_median = 0.0;
  double mu_min = 0.0;
  double mu_median = 0.0;
  /// max(0, -min Lanczos estimate) over the Lanczos probes.
  double rho_estimate = 0.0;
};

struct Probe {
  std::uint64_t cumulative = 0;
  WeightVector w;
};

/// Picks `count` evenly spaced entries of a trajectory (all when shorter).
std::vector<Probe> select_probes(const std::vector<Probe>& trajectory, std::size_t count);

/// Throws std::domain_error if some probe has F_S(w) < f* - 1e-12.
AssumptionReport assess_assumptions(const LossModel& m, const Dataset& ds, const std::vector<Probe>& probes,
                                    const ReferenceSolution& ref, std::size_t lanczos_probes,
                                    std::size_t lanczos_iters, RngStream rng);

void write_probe_csv(std::ostream& out, const AssumptionReport& report);
void write_lanczos_csv(std::ostream& out, const AssumptionReport& report);

}  // namespace stagewise
