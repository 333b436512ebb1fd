#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "stagewise/geometry.hpp"

using namespace stagewise;

TEST_CASE("projection examples") {
  CHECK(project(FeasibleSet::l1_ball(1.0), {3, 0}) == WeightVector{1, 0});
  CHECK(project(FeasibleSet::l1_ball(1.0), {2, 1}) == WeightVector{1, 0});
  CHECK(project(FeasibleSet::unconstrained(), {7, -3, 1e9}) == WeightVector{7, -3, 1e9});
  const WeightVector p = project(FeasibleSet::l2_ball(1.0), {3, 4});
  CHECK(p[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(project(FeasibleSet::l2_ball(1.0), {0.3, 0.4}) == WeightVector{0.3, 0.4});
}

TEST_CASE("bad sets and inputs") {
  CHECK_THROWS_AS(FeasibleSet::l1_ball(0.0), std::invalid_argument);
  CHECK_THROWS_AS(FeasibleSet::l2_ball(-1.0), std::invalid_argument);
  CHECK_THROWS_AS(Gamma::finite(0.0), std::invalid_argument);
  CHECK_THROWS_AS(Gamma::finite(INFINITY), std::invalid_argument);
  WeightVector bad{1.0, 0.0};
  bad[1] = NAN;
  CHECK_THROWS_AS(project(FeasibleSet::l1_ball(1.0), bad), NonFiniteError);
}

TEST_CASE("l1 projection matches the active-set brute force") {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<std::size_t> dim(1, 8);
  std::uniform_real_distribution<double> rad(0.05, 3.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = dim(gen);
    const WeightVector v = oracle::random_vector(gen, d, 2.0);
    const double B = rad(gen);
    const std::vector<double> ref = oracle::l1_projection_bruteforce(v.data(), B);
    const WeightVector u = project(FeasibleSet::l1_ball(B), v);
    for (std::size_t i = 0; i < d; ++i) worst = std::max(worst, std::abs(u[i] - ref[i]));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("l1 projection ties are sign-pattern invariant") {
  const FeasibleSet s = FeasibleSet::l1_ball(1.0);
  const WeightVector a = project(s, {1, 1, -1, 0.5});
  const WeightVector b = project(s, {-1, 1, 1, -0.5});
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(a[i]) == std::abs(b[i]));
  CHECK(l1_norm(a) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(l1_threshold(std::vector<double>{1, 1, 1}, 1.5) == doctest::Approx(0.5));
}

TEST_CASE("l1 projection is optimal against random feasible points") {
  std::mt19937_64 gen(3);
  const FeasibleSet s = FeasibleSet::l1_ball(1.5);
  for (int trial = 0; trial < 50; ++trial) {
    const WeightVector v = oracle::random_vector(gen, 6, 2.0);
    const WeightVector u = project(s, v);
    CHECK(s.contains(u, 1e-12));
    const double du = distance(u, v);
    for (int k = 0; k < 100; ++k) {
      WeightVector p = oracle::random_vector(gen, 6, 1.0);
      p = project(s, p);
      CHECK(du <= distance(p, v) + 1e-10);
    }
  }
}

TEST_CASE("projections are non-expansive") {
  std::mt19937_64 gen(5);
  const FeasibleSet sets[] = {FeasibleSet::l1_ball(1.0), FeasibleSet::l2_ball(0.7), FeasibleSet::unconstrained()};
  for (const FeasibleSet& s : sets) {
    for (int trial = 0; trial < 200; ++trial) {
      const WeightVector a = oracle::random_vector(gen, 10, 2.0);
      const WeightVector b = oracle::random_vector(gen, 10, 2.0);
      CHECK(distance(project(s, a), project(s, b)) <= distance(a, b) * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("prox step examples") {
  const WeightVector w = prox_step(FeasibleSet::unconstrained(), {1, 0}, {0, 0}, {1, 1}, 1.0, Gamma::finite(1.0));
  CHECK(w == WeightVector{0, -0.5});
  CHECK_THROWS_AS(prox_step(FeasibleSet::unconstrained(), {1, 0}, {0, 0}, {1, 1}, 0.0, Gamma::infinite()),
                  std::invalid_argument);
  CHECK_THROWS_AS(prox_step(FeasibleSet::unconstrained(), {1e308, 0}, {0, 0}, {-1e308, 0}, 10.0, Gamma::infinite()),
                  NonFiniteError);
}

TEST_CASE("infinite gamma is the plain SGD step bit for bit") {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 100; ++trial) {
    const WeightVector w = oracle::random_vector(gen, 7);
    const WeightVector a = oracle::random_vector(gen, 7);
    const WeightVector g = oracle::random_vector(gen, 7);
    const double eta = 0.01 + 0.1 * trial;
    WeightVector sgd = w;
    for (std::size_t i = 0; i < 7; ++i) sgd[i] = w[i] - eta * g[i];
    CHECK(prox_step(FeasibleSet::unconstrained(), w, a, g, eta, Gamma::infinite()) == sgd);
  }
}

TEST_CASE("prox step satisfies first-order optimality") {
  // Subproblem gradient: g + (w - w_t)/eta + (w - anchor)/gamma.
  std::mt19937_64 gen(9);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const WeightVector wt = oracle::random_vector(gen, 12);
    const WeightVector a = oracle::random_vector(gen, 12);
    const WeightVector g = oracle::random_vector(gen, 12);
    const double eta = std::exp(std::uniform_real_distribution<double>(-5, 1)(gen));
    const double gamma = std::exp(std::uniform_real_distribution<double>(-3, 5)(gen));
    const WeightVector w = prox_step(FeasibleSet::unconstrained(), wt, a, g, eta, Gamma::finite(gamma));
    WeightVector r(12);
    for (std::size_t i = 0; i < 12; ++i) r[i] = g[i] + (w[i] - wt[i]) / eta + (w[i] - a[i]) / gamma;
    worst = std::max(worst, norm(r));
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("prox step is affine in the gradient") {
  std::mt19937_64 gen(10);
  for (int trial = 0; trial < 100; ++trial) {
    const WeightVector wt = oracle::random_vector(gen, 5);
    const WeightVector a = oracle::random_vector(gen, 5);
    const WeightVector g1 = oracle::random_vector(gen, 5);
    const WeightVector g2 = oracle::random_vector(gen, 5);
    const double eta = 0.3, gamma = 2.0;
    const WeightVector p1 = prox_step(FeasibleSet::unconstrained(), wt, a, g1, eta, Gamma::finite(gamma));
    const WeightVector p2 = prox_step(FeasibleSet::unconstrained(), wt, a, g2, eta, Gamma::finite(gamma));
    const double c = -eta * gamma / (eta + gamma);
    for (std::size_t i = 0; i < 5; ++i) CHECK(p1[i] - p2[i] == doctest::Approx(c * (g1[i] - g2[i])).epsilon(1e-12));
  }
}

TEST_CASE("prox step projects its result") {
  const FeasibleSet s = FeasibleSet::l1_ball(1.0);
  const WeightVector w = prox_step(s, {0.5, 0.5}, {0, 0}, {-10, 0}, 1.0, Gamma::finite(1.0));
  CHECK(s.contains(w, 1e-12));
  CHECK(w == project(s, WeightVector{(0.5 + 10.0) / 2.0, 0.25}));
}

TEST_CASE("set kind names round-trip") {
  for (SetKind k : {SetKind::unconstrained, SetKind::l1_ball, SetKind::l2_ball}) CHECK(parse_set_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_set_kind("box"), std::invalid_argument);
}
