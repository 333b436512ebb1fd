#pragma once

#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "stagewise/core.hpp"
#include "stagewise/geometry.hpp"

namespace stagewise {

enum class LossKind { squared_hinge, logistic, square, huber, quadratic_synthetic };

const char* to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);
/// True for the four linear-model losses (all convex in w).
bool is_linear(LossKind kind);

/// Quadratic with Hessian H = V diag(eigenvalues) V^T, where V is a product of
/// three Householder reflections drawn from rotation_seed (seed 0 gives V = I).
class QuadraticProblem {
 public:
  QuadraticProblem(std::vector<double> eigenvalues, WeightVector minimizer, std::uint64_t rotation_seed);

  std::size_t dimension() const { return eigenvalues_.size(); }
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }
  const WeightVector& minimizer() const { return minimizer_; }
  std::uint64_t rotation_seed() const { return rotation_seed_; }
  double mu() const;
  double L() const;

  /// V x
  WeightVector rotate(const WeightVector& x) const;
  /// V^T x
  WeightVector rotate_transpose(const WeightVector& x) const;
  WeightVector apply_hessian(const WeightVector& v) const;
  /// 0.5 (w - w*)^T H (w - w*)
  double excess(const WeightVector& w) const;
  /// Column i of V, i.e. the eigenvector of eigenvalue i.
  WeightVector eigenvector(std::size_t i) const;

 private:
  void reflect(std::size_t r, WeightVector& x) const;

  std::vector<double> eigenvalues_;
  WeightVector minimizer_;
  std::uint64_t rotation_seed_;
  std::vector<WeightVector> householder_;  // unit vectors
};

/// Per-example loss f(w, z) and its declared constants.
///
/// For the linear losses the margin is m = w.x and y is the label:
///   squared_hinge  max(0, 1 - y m)^2
///   logistic       log(1 + exp(-y m))
///   square         (y - m)^2
///   huber          r^2/2 if |r| <= delta else delta (|r| - delta/2), r = y - m
/// For quadratic_synthetic the example features hold a noise vector xi and
///   f(w, z) = 0.5 (w - w*)^T H (w - w*) + xi.(w - w*),
/// so every example shares the Hessian H and F_S(w*) = 0 when the xi are centered.
class LossModel {
 public:
  /// Constants computed from the data and the feasible set (see README for the
  /// per-kind factors). `huber_delta` is used only by huber.
  static LossModel linear(LossKind kind, const Dataset& ds, const FeasibleSet& set, double huber_delta = 1.0);
  /// sigma^2 is the exact per-example variance of ds (uniform in w); G is the
  /// gradient bound over the set, +inf when unbounded.
  static LossModel quadratic(std::shared_ptr<const QuadraticProblem> problem, const Dataset& noise,
                             const FeasibleSet& set);

  /// Copy with an overridden variance bound; requires 0 <= sigma2 <= 4 G^2.
  LossModel with_variance(double sigma2) const;
  /// Copy with overridden L and G (both > 0).
  LossModel with_constants(double L, double G) const;

  LossKind kind() const { return kind_; }
  double smoothness() const { return L_; }
  double lipschitz() const { return G_; }
  double variance() const { return sigma2_; }
  double huber_delta() const { return huber_delta_; }
  const QuadraticProblem* quadratic_problem() const { return quad_.get(); }

 private:
  LossModel() = default;

  LossKind kind_ = LossKind::logistic;
  double L_ = 0.0;
  double G_ = 0.0;
  double sigma2_ = 0.0;
  double huber_delta_ = 1.0;
  std::shared_ptr<const QuadraticProblem> quad_;
};

/// d f / d m for the linear losses, as a function of margin m and label y.
double margin_derivative(const LossModel& m, double margin, double label);

double loss_value(const LossModel& m, const WeightVector& w, const SparseExample& z);
WeightVector loss_gradient(const LossModel& m, const WeightVector& w, const SparseExample& z);
/// out += scale * grad f(w, z). No allocation; used in the inner loops.
void add_loss_gradient(const LossModel& m, const WeightVector& w, const SparseExample& z, double scale,
                       WeightVector& out);

double empirical_risk(const LossModel& m, const WeightVector& w, const Dataset& ds);
WeightVector full_gradient(const LossModel& m, const WeightVector& w, const Dataset& ds);
/// (1/n) sum_i ||grad f(w, z_i) - grad F_S(w)||^2
double estimate_sigma2(const LossModel& m, const WeightVector& w, const Dataset& ds);

/// Empirical risk with per-dataset precomputation. For quadratic_synthetic this
/// is O(d) per call instead of O(n d).
class RiskEvaluator {
 public:
  RiskEvaluator(const LossModel& m, const Dataset& ds);
  double operator()(const WeightVector& w) const;

 private:
  const LossModel* model_;
  const Dataset* ds_;
  std::optional<WeightVector> mean_noise_;
};

}  // namespace stagewise
