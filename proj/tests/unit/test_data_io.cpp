#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <tuple>

#include "doctest.h"
#include "oracles.hpp"
#include "stagewise/data_io.hpp"

using namespace stagewise;

namespace {

Dataset parse(const std::string& text, std::optional<std::size_t> hint = std::nullopt) {
  std::istringstream in(text);
  return parse_libsvm(in, hint);
}

std::size_t error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e.line;
  }
  return static_cast<std::size_t>(-1);
}

}  // namespace

TEST_CASE("libsvm lines") {
  const Dataset ds = parse("1 3:0.5 7:1.2\n-1\n");
  REQUIRE(ds.size() == 2);
  CHECK(ds.dimension() == 7);
  CHECK(ds[0].label == 1.0);
  CHECK(ds[0].features == std::vector<Feature>{{2, 0.5}, {6, 1.2}});
  CHECK(ds[1].label == -1.0);
  CHECK(ds[1].features.empty());
  CHECK(parse("+1 1:2\n", 10).dimension() == 10);
  CHECK(parse("# header\n\n1 2:1\n").size() == 1);
}

TEST_CASE("libsvm errors carry line numbers") {
  CHECK(error_line("1 1:0.5\nx 2:1\n") == 2);
  CHECK(error_line("1 1:a\n") == 1);
  CHECK(error_line("1 1:1 3:1\n1 3:1 2:1\n") == 2);
  CHECK(error_line("1 2:1 2:1\n") == 1);
  CHECK(error_line("1 0:1\n") == 1);
  CHECK(error_line("1 2\n") == 1);
  CHECK_THROWS_AS(parse(""), ParseError);
  CHECK_THROWS_AS(parse("# only a comment\n\n"), ParseError);
}

TEST_CASE("libsvm round trip") {
  SUBCASE("synthetic data") {
    const Dataset ds = gen_sparse_classification(200, 40, 7, 0.2, 11);
    std::ostringstream out;
    write_libsvm(out, ds);
    CHECK(parse(out.str(), ds.dimension()) == ds);
  }
  SUBCASE("awkward values") {
    const Dataset ds({{1.0, {{0, 0.1}, {3, 1e-300}}}, {-1.0, {{1, -3.0000000000000004}, {2, 1e300}}}, {0.5, {}}}, 4);
    std::ostringstream out;
    write_libsvm(out, ds);
    CHECK(parse(out.str(), 4) == ds);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("dataset hash") {
  const Dataset a = gen_sparse_classification(50, 10, 3, 0.1, 1);
  const Dataset b = gen_sparse_classification(50, 10, 3, 0.1, 1);
  const Dataset c = gen_sparse_classification(50, 10, 3, 0.1, 2);
  CHECK(dataset_hash(a) == dataset_hash(b));
  CHECK(dataset_hash(a) != dataset_hash(c));
  CHECK(dataset_hash(a) != dataset_hash(make_neighbor(a, 0, a[1])));
  CHECK(hash_hex(0xabcULL) == "0000000000000abc");
}

TEST_CASE("sparse classification generator") {
  const Dataset ds = gen_sparse_classification(300, 30, 6, 0.0, 5);
  CHECK(ds.size() == 300);
  CHECK(ds.dimension() == 30);
  for (const auto& z : ds.examples()) {
    CHECK(z.features.size() == 6);
    CHECK((z.label == 1.0 || z.label == -1.0));
    double sq = 0.0;
    for (const auto& f : z.features) sq += f.value * f.value;
    CHECK(sq == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gen_quadratic spectrum") {
  const std::size_t d = 40, n = 400;
  const QuadraticInstance inst = gen_quadratic(d, n, 1e-3, 2.0, 0.1, 17);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& f : inst.least_squares[i].features) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f.index)) = f.value;
  }
  const Eigen::MatrixXd C = X.transpose() * X / static_cast<double>(n);
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(C, Eigen::EigenvaluesOnly).eigenvalues();
  CHECK(std::abs(ev.minCoeff() - 1e-3) <= 1e-8 * 1e-3);
  CHECK(std::abs(ev.maxCoeff() - 2.0) <= 1e-8 * 2.0);
  // The analytic Hessian agrees with the design covariance.
  std::mt19937_64 gen(2);
  const WeightVector v = oracle::random_vector(gen, d);
  Eigen::VectorXd ve(static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) ve(static_cast<Eigen::Index>(j)) = v[j];
  const Eigen::VectorXd cv = C * ve;
  const WeightVector hv = inst.problem->apply_hessian(v);
  for (std::size_t j = 0; j < d; ++j) CHECK(hv[j] == doctest::Approx(cv(static_cast<Eigen::Index>(j))).epsilon(1e-9));
  CHECK_THROWS_AS(gen_quadratic(10, 5, 0.1, 1.0, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(gen_quadratic(10, 20, 2.0, 1.0, 0.0, 1), std::invalid_argument);
}

TEST_CASE("gen_quadratic without noise") {
  const QuadraticInstance inst = gen_quadratic(20, 100, 0.05, 1.0, 0.0, 3);
  const LossModel sq = LossModel::linear(LossKind::square, inst.least_squares, FeasibleSet::unconstrained());
  CHECK(empirical_risk(sq, inst.problem->minimizer(), inst.least_squares) <= 1e-24);
  const LossModel qm = LossModel::quadratic(inst.problem, inst.noise, FeasibleSet::unconstrained());
  CHECK(empirical_risk(qm, inst.problem->minimizer(), inst.noise) == 0.0);
}

TEST_CASE("gen_quadratic noise is centered and orthogonal to the design") {
  const QuadraticInstance inst = gen_quadratic(15, 120, 0.1, 1.0, 0.5, 4);
  const LossModel qm = LossModel::quadratic(inst.problem, inst.noise, FeasibleSet::unconstrained());
  const WeightVector g = full_gradient(qm, inst.problem->minimizer(), inst.noise);
  CHECK(norm(g) <= 1e-12);
}

TEST_CASE("PL inequality on the quadratic testbed") {
  const double mu = 0.02;
  const QuadraticInstance inst = gen_quadratic(12, 60, mu, 1.0, 0.3, 8);
  const LossModel qm = LossModel::quadratic(inst.problem, inst.noise, FeasibleSet::unconstrained());
  const WeightVector& ws = inst.problem->minimizer();
  std::mt19937_64 gen(9);
  bool holds = true;
  for (int trial = 0; trial < 10000; ++trial) {
    const WeightVector w = add(ws, oracle::random_vector(gen, 12, 0.5));
    const double gap = inst.problem->excess(w);
    const double gsq = squared_norm(inst.problem->apply_hessian(subtract(w, ws)));
    holds = holds && gsq >= 2.0 * mu * gap * (1 - 1e-12);
  }
  CHECK(holds);
  const WeightVector w = add(ws, scale(inst.problem->eigenvector(0), 0.7));
  const WeightVector g = full_gradient(qm, w, inst.noise);
  const double ratio = squared_norm(g) / (2.0 * empirical_risk(qm, w, inst.noise));
  CHECK(std::abs(ratio - mu) <= 1e-8 * mu);
}

TEST_CASE("isotropic quadratic contracts by 1 - eta mu per step") {
  const QuadraticInstance inst = gen_quadratic(6, 30, 0.4, 0.4, 0.0, 12);
  const LossModel qm = LossModel::quadratic(inst.problem, inst.noise, FeasibleSet::unconstrained());
  const WeightVector& ws = inst.problem->minimizer();
  WeightVector w = add(ws, WeightVector{1, -1, 2, 0, 0.5, 3});
  const double eta = 0.5;
  for (int t = 0; t < 20; ++t) {
    const double before = distance(w, ws);
    WeightVector g(6);
    add_loss_gradient(qm, w, inst.noise[static_cast<std::size_t>(t) % 30], 1.0, g);
    axpy(-eta, g, w);
    CHECK(distance(w, ws) == doctest::Approx((1 - eta * 0.4) * before).epsilon(1e-12));
  }
}

TEST_CASE("noise level for a target variance") {
  const double sigma2 = 0.05;
  const double noise = quadratic_noise_for_sigma2(20, 2000, 0.01, 1.0, sigma2);
  const QuadraticInstance inst = gen_quadratic(20, 2000, 0.01, 1.0, noise, 6);
  double mean_sq = 0.0;
  for (const auto& z : inst.noise.examples()) {
    double s = 0.0;
    for (const auto& f : z.features) s += f.value * f.value;
    mean_sq += s / 2000.0;
  }
  CHECK(mean_sq == doctest::Approx(sigma2).epsilon(0.2));
}

TEST_CASE("splits") {
  const Dataset ds = gen_sparse_classification(10, 5, 2, 0.0, 1);
  const Split s = split(ds, {0.5, 0.0, 3});
  CHECK(s.train.size() == 5);
  REQUIRE(s.test);
  CHECK(s.test->size() == 5);
  CHECK_FALSE(s.validation);

  const Dataset big = gen_sparse_classification(101, 8, 3, 0.0, 2);
  const Split a = split(big, {0.2, 0.3, 9});
  const Split b = split(big, {0.2, 0.3, 9});
  CHECK(a.train == b.train);
  CHECK(*a.test == *b.test);
  CHECK(*a.validation == *b.validation);
  CHECK(std::abs(static_cast<double>(a.test->size()) - 20.2) <= 1.0);
  CHECK(std::abs(static_cast<double>(a.validation->size()) - 30.3) <= 1.0);
  CHECK(split(big, {0.2, 0.3, 10}).train != a.train);

  std::vector<SparseExample> parts(a.train.examples().begin(), a.train.examples().end());
  parts.insert(parts.end(), a.test->examples().begin(), a.test->examples().end());
  parts.insert(parts.end(), a.validation->examples().begin(), a.validation->examples().end());
  std::vector<SparseExample> orig(big.examples().begin(), big.examples().end());
  const auto less = [](const SparseExample& x, const SparseExample& y) {
    if (x.label != y.label) return x.label < y.label;
    return std::lexicographical_compare(x.features.begin(), x.features.end(), y.features.begin(), y.features.end(),
                                        [](const Feature& a, const Feature& b) {
                                          return std::tie(a.index, a.value) < std::tie(b.index, b.value);
                                        });
  };
  std::sort(parts.begin(), parts.end(), less);
  std::sort(orig.begin(), orig.end(), less);
  CHECK(parts == orig);

  CHECK_THROWS_AS(split(big, {0.6, 0.4, 1}), std::invalid_argument);
  CHECK_THROWS_AS(split(big, {-0.1, 0.0, 1}), std::invalid_argument);
}
