#include <cmath>
#include <vector>

#include "doctest.h"
#include "stagewise/core.hpp"

using namespace stagewise;

TEST_CASE("dot products") {
  CHECK(dot({1, 2, 3}, {4, 5, 6}) == 32.0);
  CHECK(dot({1, 2, 3}, WeightVector(3)) == 0.0);
  CHECK(dot(WeightVector::basis(3, 0), WeightVector::basis(3, 1)) == 0.0);
  CHECK_THROWS_AS(dot({1, 2}, {1, 2, 3}), std::invalid_argument);
}

TEST_CASE("sparse dot") {
  SparseExample x{0.0, {{0, 2.0}}};
  CHECK(sparse_dot({1, 1, 1}, x) == 2.0);
  CHECK(sparse_dot(WeightVector(3), x) == 0.0);
  SparseExample y{0.0, {{0, 2.0}, {2, 4.0}}};
  CHECK(sparse_dot({0.5, 0, -1}, y) == -3.0);
  SparseExample out{0.0, {{5, 1.0}}};
  CHECK_THROWS_AS(sparse_dot({1, 1, 1}, out), std::invalid_argument);
}

TEST_CASE("vector ops reject mismatched lengths") {
  const WeightVector a{1, 2}, b{1, 2, 3};
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(subtract(a, b), std::invalid_argument);
  CHECK_THROWS_AS(distance(a, b), std::invalid_argument);
  CHECK_THROWS_AS(squared_distance(a, b), std::invalid_argument);
  WeightVector c = a;
  CHECK_THROWS_AS(axpy(1.0, b, c), std::invalid_argument);
}

TEST_CASE("vector arithmetic") {
  CHECK(norm({3, 4}) == 5.0);
  CHECK(l1_norm({-1, 2, -3}) == 6.0);
  CHECK(add({1, 2}, {3, 4}) == WeightVector{4, 6});
  CHECK(subtract({1, 2}, {3, 4}) == WeightVector{-2, -2});
  CHECK(scale({1, -2}, 2.0) == WeightVector{2, -4});
  WeightVector y{1, 1, 1};
  axpy(2.0, {1, 0, -1}, y);
  CHECK(y == WeightVector{3, 1, -1});
  sparse_axpy(0.5, SparseExample{0.0, {{1, 4.0}}}, y);
  CHECK(y == WeightVector{3, 3, -1});
  CHECK(squared_distance({0, 0}, {3, 4}) == 25.0);
}

TEST_CASE("weight vectors stay finite") {
  CHECK_THROWS_AS(WeightVector({1.0, NAN}), NonFiniteError);
  CHECK_THROWS_AS(WeightVector(2, INFINITY), NonFiniteError);
  WeightVector w{1, 2};
  w[0] = NAN;
  CHECK_FALSE(w.all_finite());
  CHECK_THROWS_AS(w.require_finite("w"), NonFiniteError);
  CHECK_THROWS_AS(scale({1e308, 1.0}, 10.0), NonFiniteError);
}

TEST_CASE("examples and datasets validate") {
  CHECK_THROWS_AS((SparseExample{1.0, {{2, 1.0}, {1, 1.0}}}.validate(5)), std::invalid_argument);
  CHECK_THROWS_AS((SparseExample{1.0, {{1, 1.0}, {1, 1.0}}}.validate(5)), std::invalid_argument);
  CHECK_THROWS_AS((SparseExample{1.0, {{5, 1.0}}}.validate(5)), std::invalid_argument);
  CHECK_NOTHROW((SparseExample{1.0, {}}.validate(5)));
  CHECK_THROWS_AS(Dataset({}, 3), std::invalid_argument);
  CHECK_THROWS_AS(Dataset({SparseExample{1.0, {{3, 1.0}}}}, 3), std::invalid_argument);
}

TEST_CASE("make_neighbor") {
  const Dataset ds({{1.0, {{0, 1.0}}}, {-1.0, {{1, 1.0}}}, {1.0, {{2, 1.0}}}}, 3);
  const SparseExample repl{-1.0, {{2, 5.0}}};
  const Dataset nb = make_neighbor(ds, 0, repl);
  CHECK(nb[0] == repl);
  CHECK(nb[1] == ds[1]);
  CHECK(nb[2] == ds[2]);
  CHECK(make_neighbor(ds, 1, ds[1]) == ds);
  CHECK(make_neighbor(nb, 0, ds[0]) == ds);
  const Dataset one({{1.0, {}}}, 3);
  CHECK(make_neighbor(one, 0, repl).size() == 1);
  CHECK_THROWS_AS(make_neighbor(ds, 3, repl), std::invalid_argument);
  CHECK_THROWS_AS(make_neighbor(ds, 0, SparseExample{1.0, {{7, 1.0}}}), std::invalid_argument);
}

TEST_CASE("draw_index determinism and range") {
  RngStream a{42, 0};
  for (int i = 0; i < 100; ++i) CHECK(draw_index(a, 1) == 0);
  RngStream b{7, 123}, c{7, 123};
  CHECK(draw_index(b, 1000) == draw_index(c, 1000));
  CHECK(b.counter == 124);
  CHECK_THROWS_AS(draw_index(b, 0), std::invalid_argument);

  RngStream r{99, 0};
  std::vector<std::size_t> first;
  for (int i = 0; i < 1000; ++i) first.push_back(draw_index(r, 37));
  RngStream replay{99, 0};
  for (int i = 0; i < 1000; ++i) CHECK(draw_index(replay, 37) == first[static_cast<std::size_t>(i)]);
}

TEST_CASE("peek_index agrees with later draws") {
  RngStream r{5, 10};
  const std::size_t ahead = peek_index(r, 17, 3);
  CHECK(r.counter == 10);
  draw_index(r, 17);
  draw_index(r, 17);
  draw_index(r, 17);
  CHECK(draw_index(r, 17) == ahead);
}

TEST_CASE("draw_index is uniform within 3 sigma") {
  // Multinomial: each count has mean N/n and variance N p (1 - p).
  const std::size_t N = 1000000, n = 10;
  std::vector<std::size_t> counts(n, 0);
  RngStream r{2024, 0};
  for (std::size_t i = 0; i < N; ++i) ++counts[draw_index(r, n)];
  const double mean = static_cast<double>(N) / n;
  const double sd = std::sqrt(static_cast<double>(N) * 0.1 * 0.9);
  for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(static_cast<double>(counts[k]) - mean) <= 3.0 * sd);
}

TEST_CASE("uniform and normal draws") {
  RngStream r{1, 0};
  double sum = 0.0, sq = 0.0;
  const int N = 200000;
  bool in_range = true;
  for (int i = 0; i < N; ++i) {
    const double u = draw_uniform(r);
    in_range = in_range && u >= 0.0 && u < 1.0;
  }
  CHECK(in_range);
  RngStream g{2, 0};
  for (int i = 0; i < N; ++i) {
    const double x = draw_normal(g);
    sum += x;
    sq += x * x;
  }
  CHECK(g.counter == 2 * static_cast<std::uint64_t>(N));
  CHECK(std::abs(sum / N) < 0.01);
  CHECK(std::abs(sq / N - 1.0) < 0.02);
}
