#pragma once

#include <limits>

#include "stagewise/core.hpp"

namespace stagewise {

enum class SetKind { unconstrained, l1_ball, l2_ball };

/// Closed convex feasible set Omega.
struct FeasibleSet {
  SetKind kind = SetKind::unconstrained;
  double radius = std::numeric_limits<double>::infinity();

  static FeasibleSet unconstrained() { return {}; }
  static FeasibleSet l1_ball(double B);
  static FeasibleSet l2_ball(double R);

  bool bounded() const { return kind != SetKind::unconstrained; }
  /// Upper bound on ||w||_2 over the set (+inf when unbounded).
  double l2_bound() const { return bounded() ? radius : std::numeric_limits<double>::infinity(); }
  bool contains(const WeightVector& v, double tol = 1e-12) const;

  friend bool operator==(const FeasibleSet&, const FeasibleSet&) = default;
};

const char* to_string(SetKind kind);
SetKind parse_set_kind(std::string_view name);

/// Regularization weight of the anchored subproblem. Infinite means no anchor
/// term at all, so the step is exactly the plain projected SGD update.
class Gamma {
 public:
  static Gamma infinite() { return Gamma(); }
  static Gamma finite(double value);

  bool is_infinite() const { return infinite_; }
  /// Finite value; +inf when infinite.
  double value() const { return infinite_ ? std::numeric_limits<double>::infinity() : value_; }

  friend bool operator==(const Gamma&, const Gamma&) = default;

 private:
  Gamma() = default;
  bool infinite_ = true;
  double value_ = 0.0;
};

/// Euclidean projection onto the set. The l1 ball uses the sorted-threshold
/// method.
WeightVector project(const FeasibleSet& set, const WeightVector& v);
void project_inplace(const FeasibleSet& set, WeightVector& v);

/// Soft-threshold level tau of the l1-ball projection (0 when v is feasible).
double l1_threshold(std::span<const double> v, double B);

/// project(set, (gamma*w_t + eta*anchor - eta*gamma*g) / (eta + gamma)).
/// With infinite gamma this is project(set, w_t - eta*g).
WeightVector prox_step(const FeasibleSet& set, const WeightVector& w_t, const WeightVector& anchor,
                       const WeightVector& g, double eta, Gamma gamma);
/// In-place form used by the optimizers; `w` holds w_t on entry.
void prox_step_inplace(const FeasibleSet& set, WeightVector& w, const WeightVector& anchor,
                       const WeightVector& g, double eta, Gamma gamma);

}  // namespace stagewise
