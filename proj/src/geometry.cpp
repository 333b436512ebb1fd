#include "stagewise/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace stagewise {

FeasibleSet FeasibleSet::l1_ball(double B) {
  if (!(B > 0.0) || !std::isfinite(B)) throw std::invalid_argument("l1_ball: radius must be finite and > 0");
  return {SetKind::l1_ball, B};
}

FeasibleSet FeasibleSet::l2_ball(double R) {
  if (!(R > 0.0) || !std::isfinite(R)) throw std::invalid_argument("l2_ball: radius must be finite and > 0");
  return {SetKind::l2_ball, R};
}

bool FeasibleSet::contains(const WeightVector& v, double tol) const {
  switch (kind) {
    case SetKind::unconstrained: return true;
    case SetKind::l1_ball: return l1_norm(v) <= radius * (1.0 + tol);
    case SetKind::l2_ball: return norm(v) <= radius * (1.0 + tol);
  }
  return false;
}

const char* to_string(SetKind kind) {
  switch (kind) {
    case SetKind::unconstrained: return "unconstrained";
    case SetKind::l1_ball: return "l1_ball";
    case SetKind::l2_ball: return "l2_ball";
  }
  return "?";
}

SetKind parse_set_kind(std::string_view name) {
  if (name == "unconstrained") return SetKind::unconstrained;
  if (name == "l1_ball") return SetKind::l1_ball;
  if (name == "l2_ball") return SetKind::l2_ball;
  throw std::invalid_argument("unknown feasible set kind '" + std::string(name) + "'");
}

Gamma Gamma::finite(double value) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw std::invalid_argument("gamma must be finite and > 0 (use Gamma::infinite() for no anchor)");
  }
  Gamma g;
  g.infinite_ = false;
  g.value_ = value;
  return g;
}

double l1_threshold(std::span<const double> v, double B) {
  double total = 0.0;
  for (double x : v) total += std::abs(x);
  if (total <= B) return 0.0;
  std::vector<double> u(v.size());
  std::transform(v.begin(), v.end(), u.begin(), [](double x) { return std::abs(x); });
  std::sort(u.begin(), u.end(), std::greater<>());
  // Largest j with u_j > (sum_{i<=j} u_i - B) / j.
  double prefix = 0.0;
  double tau = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    prefix += u[j];
    const double candidate = (prefix - B) / static_cast<double>(j + 1);
    if (u[j] > candidate) {
      tau = candidate;
    } else {
      break;
    }
  }
  return tau;
}

void project_inplace(const FeasibleSet& set, WeightVector& v) {
  v.require_finite("project");
  switch (set.kind) {
    case SetKind::unconstrained: return;
    case SetKind::l2_ball: {
      const double n = norm(v);
      if (n > set.radius) {
        const double s = set.radius / n;
        for (double& x : v.values()) x *= s;
      }
      return;
    }
    case SetKind::l1_ball: {
      const double tau = l1_threshold(v.values(), set.radius);
      if (tau == 0.0) return;
      for (double& x : v.values()) {
        const double m = std::abs(x) - tau;
        x = m > 0.0 ? std::copysign(m, x) : 0.0;
      }
      return;
    }
  }
}

WeightVector project(const FeasibleSet& set, const WeightVector& v) {
  WeightVector out = v;
  project_inplace(set, out);
  return out;
}

void prox_step_inplace(const FeasibleSet& set, WeightVector& w, const WeightVector& anchor,
                       const WeightVector& g, double eta, Gamma gamma) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("prox_step: eta must be finite and > 0");
  require_same_size(w, g, "prox_step");
  const std::size_t d = w.size();
  if (gamma.is_infinite()) {
    for (std::size_t i = 0; i < d; ++i) w[i] -= eta * g[i];
  } else {
    require_same_size(w, anchor, "prox_step");
    const double gm = gamma.value();
    const double denom = eta + gm;
    const double keep = gm / denom;
    const double pull = eta / denom;
    const double step = eta * gm / denom;
    for (std::size_t i = 0; i < d; ++i) w[i] = keep * w[i] + pull * anchor[i] - step * g[i];
  }
  w.require_finite("prox_step");
  project_inplace(set, w);
}

WeightVector prox_step(const FeasibleSet& set, const WeightVector& w_t, const WeightVector& anchor,
                       const WeightVector& g, double eta, Gamma gamma) {
  WeightVector w = w_t;
  prox_step_inplace(set, w, anchor, g, eta, gamma);
  return w;
}

}  // namespace stagewise
