#include "stagewise/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace stagewise {

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::squared_hinge: return "squared_hinge";
    case LossKind::logistic: return "logistic";
    case LossKind::square: return "square";
    case LossKind::huber: return "huber";
    case LossKind::quadratic_synthetic: return "quadratic_synthetic";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "squared_hinge") return LossKind::squared_hinge;
  if (name == "logistic") return LossKind::logistic;
  if (name == "square") return LossKind::square;
  if (name == "huber") return LossKind::huber;
  if (name == "quadratic_synthetic") return LossKind::quadratic_synthetic;
  throw std::invalid_argument("unknown loss kind '" + std::string(name) + "'");
}

bool is_linear(LossKind kind) { return kind != LossKind::quadratic_synthetic; }

// ---------------------------------------------------------------- quadratic

QuadraticProblem::QuadraticProblem(std::vector<double> eigenvalues, WeightVector minimizer,
                                   std::uint64_t rotation_seed)
    : eigenvalues_(std::move(eigenvalues)), minimizer_(std::move(minimizer)), rotation_seed_(rotation_seed) {
  if (eigenvalues_.empty()) throw std::invalid_argument("QuadraticProblem: no eigenvalues");
  if (minimizer_.size() != eigenvalues_.size()) {
    throw std::invalid_argument("QuadraticProblem: minimizer dimension differs from eigenvalue count");
  }
  for (double e : eigenvalues_) {
    if (!(e > 0.0) || !std::isfinite(e)) throw std::invalid_argument("QuadraticProblem: eigenvalues must be > 0");
  }
  if (rotation_seed_ == 0) return;
  const std::size_t d = dimension();
  RngStream rng{mix64(rotation_seed_, 0x51A7E5ULL), 0};
  for (int r = 0; r < 3; ++r) {
    WeightVector u(d);
    for (std::size_t i = 0; i < d; ++i) u[i] = draw_normal(rng);
    const double n = norm(u);
    if (n == 0.0) continue;
    householder_.push_back(scale(u, 1.0 / n));
  }
}

double QuadraticProblem::mu() const { return *std::min_element(eigenvalues_.begin(), eigenvalues_.end()); }
double QuadraticProblem::L() const { return *std::max_element(eigenvalues_.begin(), eigenvalues_.end()); }

void QuadraticProblem::reflect(std::size_t r, WeightVector& x) const {
  const WeightVector& u = householder_[r];
  axpy(-2.0 * dot(u, x), u, x);
}

// V = P_0 P_1 P_2 with symmetric reflections P_r = I - 2 u_r u_r^T.
WeightVector QuadraticProblem::rotate(const WeightVector& x) const {
  WeightVector y = x;
  for (std::size_t r = householder_.size(); r-- > 0;) reflect(r, y);
  return y;
}

WeightVector QuadraticProblem::rotate_transpose(const WeightVector& x) const {
  WeightVector y = x;
  for (std::size_t r = 0; r < householder_.size(); ++r) reflect(r, y);
  return y;
}

WeightVector QuadraticProblem::apply_hessian(const WeightVector& v) const {
  if (v.size() != dimension()) throw std::invalid_argument("apply_hessian: dimension mismatch");
  WeightVector c = rotate_transpose(v);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= eigenvalues_[i];
  return rotate(c);
}

double QuadraticProblem::excess(const WeightVector& w) const {
  const WeightVector c = rotate_transpose(subtract(w, minimizer_));
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) s += eigenvalues_[i] * c[i] * c[i];
  return 0.5 * s;
}

WeightVector QuadraticProblem::eigenvector(std::size_t i) const {
  return rotate(WeightVector::basis(dimension(), i));
}

// ---------------------------------------------------------------- LossModel

namespace {

struct DataExtent {
  double max_x = 0.0;   // max_i ||x_i||
  double max_y = 0.0;   // max_i |y_i|
};

DataExtent extent(const Dataset& ds) {
  DataExtent e;
  for (const auto& z : ds.examples()) {
    e.max_x = std::max(e.max_x, std::sqrt(z.squared_norm()));
    e.max_y = std::max(e.max_y, std::abs(z.label));
  }
  return e;
}

double positive_or_tiny(double v) { return v > 0.0 ? v : 1e-300; }

void require_model_dims(const LossModel& m, const WeightVector& w) {
  if (const auto* q = m.quadratic_problem(); q && q->dimension() != w.size()) {
    throw std::invalid_argument("quadratic loss: weight dimension differs from problem dimension");
  }
}

double checked(double v, const char* what) {
  if (!std::isfinite(v)) throw NonFiniteError(std::string(what) + ": non-finite value");
  return v;
}

// log(1 + exp(-t)) without overflow.
double softplus_neg(double t) { return t > 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t)); }

// 1 / (1 + exp(t))
double sigmoid_neg(double t) {
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(t));
}

}  // namespace

LossModel LossModel::linear(LossKind kind, const Dataset& ds, const FeasibleSet& set, double huber_delta) {
  if (!is_linear(kind)) throw std::invalid_argument("LossModel::linear: quadratic_synthetic needs LossModel::quadratic");
  if (kind == LossKind::huber && (!(huber_delta > 0.0) || !std::isfinite(huber_delta))) {
    throw std::invalid_argument("huber_delta must be finite and > 0");
  }
  const DataExtent e = extent(ds);
  const double R = set.l2_bound();
  const double x2 = e.max_x * e.max_x;
  LossModel m;
  m.kind_ = kind;
  m.huber_delta_ = huber_delta;
  switch (kind) {
    case LossKind::squared_hinge:
      m.L_ = 2.0 * e.max_y * e.max_y * x2;
      m.G_ = 2.0 * e.max_y * e.max_x * (1.0 + e.max_y * R * e.max_x);
      break;
    case LossKind::logistic:
      m.L_ = 0.25 * e.max_y * e.max_y * x2;
      m.G_ = e.max_y * e.max_x;
      break;
    case LossKind::square:
      m.L_ = 2.0 * x2;
      m.G_ = 2.0 * e.max_x * (e.max_y + R * e.max_x);
      break;
    case LossKind::huber:
      m.L_ = x2;
      m.G_ = huber_delta * e.max_x;
      break;
    case LossKind::quadratic_synthetic: break;
  }
  // An all-zero dataset still needs positive constants.
  m.L_ = positive_or_tiny(m.L_);
  m.G_ = std::isnan(m.G_) ? std::numeric_limits<double>::infinity() : positive_or_tiny(m.G_);
  m.sigma2_ = 4.0 * m.G_ * m.G_;
  return m;
}

LossModel LossModel::quadratic(std::shared_ptr<const QuadraticProblem> problem, const Dataset& noise,
                               const FeasibleSet& set) {
  if (!problem) throw std::invalid_argument("LossModel::quadratic: null problem");
  if (noise.dimension() != problem->dimension()) {
    throw std::invalid_argument("LossModel::quadratic: noise dataset dimension differs from problem");
  }
  LossModel m;
  m.kind_ = LossKind::quadratic_synthetic;
  m.L_ = problem->L();
  const DataExtent e = extent(noise);
  const double reach = set.l2_bound() + norm(problem->minimizer());
  m.G_ = m.L_ * reach + e.max_x;
  m.quad_ = std::move(problem);
  m.sigma2_ = estimate_sigma2(m, m.quad_->minimizer(), noise);
  return m;
}

LossModel LossModel::with_variance(double sigma2) const {
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw std::invalid_argument("variance must be finite and >= 0");
  if (sigma2 > 4.0 * G_ * G_) throw std::invalid_argument("variance bound exceeds 4 G^2");
  LossModel m = *this;
  m.sigma2_ = sigma2;
  return m;
}

LossModel LossModel::with_constants(double L, double G) const {
  if (!(L > 0.0) || !std::isfinite(L)) throw std::invalid_argument("L must be finite and > 0");
  if (!(G > 0.0)) throw std::invalid_argument("G must be > 0");
  LossModel m = *this;
  m.L_ = L;
  m.G_ = G;
  m.sigma2_ = std::min(m.sigma2_, 4.0 * G * G);
  return m;
}

// ---------------------------------------------------------------- evaluation

double margin_derivative(const LossModel& m, double margin, double y) {
  switch (m.kind()) {
    case LossKind::squared_hinge: {
      const double slack = 1.0 - y * margin;
      return slack > 0.0 ? -2.0 * y * slack : 0.0;
    }
    case LossKind::logistic: return -y * sigmoid_neg(y * margin);
    case LossKind::square: return -2.0 * (y - margin);
    case LossKind::huber: {
      const double r = y - margin;
      const double delta = m.huber_delta();
      return -std::clamp(r, -delta, delta);
    }
    case LossKind::quadratic_synthetic: break;
  }
  throw std::logic_error("margin_derivative: not a linear loss");
}

double loss_value(const LossModel& m, const WeightVector& w, const SparseExample& z) {
  if (const auto* q = m.quadratic_problem()) {
    require_model_dims(m, w);
    const WeightVector diff = subtract(w, q->minimizer());
    return checked(q->excess(w) + sparse_dot(diff, z), "loss_value");
  }
  const double margin = sparse_dot(w, z);
  const double y = z.label;
  double v = 0.0;
  switch (m.kind()) {
    case LossKind::squared_hinge: {
      const double slack = std::max(0.0, 1.0 - y * margin);
      v = slack * slack;
      break;
    }
    case LossKind::logistic: v = softplus_neg(y * margin); break;
    case LossKind::square: v = (y - margin) * (y - margin); break;
    case LossKind::huber: {
      const double r = std::abs(y - margin);
      const double delta = m.huber_delta();
      v = r <= delta ? 0.5 * r * r : delta * (r - 0.5 * delta);
      break;
    }
    case LossKind::quadratic_synthetic: break;
  }
  return checked(v, "loss_value");
}

void add_loss_gradient(const LossModel& m, const WeightVector& w, const SparseExample& z, double scale,
                       WeightVector& out) {
  require_same_size(w, out, "loss_gradient");
  if (const auto* q = m.quadratic_problem()) {
    require_model_dims(m, w);
    const WeightVector hv = q->apply_hessian(subtract(w, q->minimizer()));
    axpy(scale, hv, out);
    sparse_axpy(scale, z, out);
    return;
  }
  const double dm = margin_derivative(m, sparse_dot(w, z), z.label);
  if (!std::isfinite(dm)) throw NonFiniteError("loss_gradient: non-finite derivative");
  if (dm != 0.0) sparse_axpy(scale * dm, z, out);
}

WeightVector loss_gradient(const LossModel& m, const WeightVector& w, const SparseExample& z) {
  WeightVector g(w.size());
  add_loss_gradient(m, w, z, 1.0, g);
  g.require_finite("loss_gradient");
  return g;
}

double empirical_risk(const LossModel& m, const WeightVector& w, const Dataset& ds) {
  double s = 0.0;
  for (const auto& z : ds.examples()) s += loss_value(m, w, z);
  return checked(s / static_cast<double>(ds.size()), "empirical_risk");
}

WeightVector full_gradient(const LossModel& m, const WeightVector& w, const Dataset& ds) {
  const double inv_n = 1.0 / static_cast<double>(ds.size());
  WeightVector g(w.size());
  if (const auto* q = m.quadratic_problem()) {
    require_model_dims(m, w);
    g = q->apply_hessian(subtract(w, q->minimizer()));
    for (const auto& z : ds.examples()) sparse_axpy(inv_n, z, g);
  } else {
    for (const auto& z : ds.examples()) add_loss_gradient(m, w, z, inv_n, g);
  }
  g.require_finite("full_gradient");
  return g;
}

double estimate_sigma2(const LossModel& m, const WeightVector& w, const Dataset& ds) {
  const WeightVector mean = full_gradient(m, w, ds);
  double s = 0.0;
  WeightVector g(w.size());
  for (const auto& z : ds.examples()) {
    std::fill(g.values().begin(), g.values().end(), 0.0);
    add_loss_gradient(m, w, z, 1.0, g);
    s += squared_distance(g, mean);
  }
  return checked(s / static_cast<double>(ds.size()), "estimate_sigma2");
}

RiskEvaluator::RiskEvaluator(const LossModel& m, const Dataset& ds) : model_(&m), ds_(&ds) {
  if (m.quadratic_problem()) {
    WeightVector mean(ds.dimension());
    const double inv_n = 1.0 / static_cast<double>(ds.size());
    for (const auto& z : ds.examples()) sparse_axpy(inv_n, z, mean);
    mean_noise_ = std::move(mean);
  }
}

double RiskEvaluator::operator()(const WeightVector& w) const {
  if (mean_noise_) {
    const auto* q = model_->quadratic_problem();
    require_model_dims(*model_, w);
    return checked(q->excess(w) + dot(*mean_noise_, subtract(w, q->minimizer())), "empirical_risk");
  }
  return empirical_risk(*model_, w, *ds_);
}

}  // namespace stagewise
