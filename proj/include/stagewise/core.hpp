#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stagewise {

/// Raised when an operation would produce a NaN or infinite coordinate.
class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Dense parameter vector. Every coordinate is finite; the dimension is fixed
/// at construction.
class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(std::size_t dimension, double fill = 0.0);
  explicit WeightVector(std::vector<double> values);
  WeightVector(std::initializer_list<double> values);

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const std::vector<double>& data() const { return values_; }

  /// Throws NonFiniteError naming `what` if any coordinate is NaN or infinite.
  void require_finite(std::string_view what) const;
  bool all_finite() const;

  static WeightVector zeros(std::size_t dimension) { return WeightVector(dimension); }
  static WeightVector basis(std::size_t dimension, std::size_t index);

  friend bool operator==(const WeightVector&, const WeightVector&) = default;

 private:
  std::vector<double> values_;
};

struct Feature {
  std::uint32_t index = 0;
  double value = 0.0;

  friend bool operator==(const Feature&, const Feature&) = default;
};

/// One labeled example with 0-based, strictly increasing feature indices.
struct SparseExample {
  double label = 0.0;
  std::vector<Feature> features;

  /// Throws std::invalid_argument if indices are not strictly increasing, any
  /// index is >= dimension, or a value is not finite.
  void validate(std::size_t dimension) const;
  double squared_norm() const;

  friend bool operator==(const SparseExample&, const SparseExample&) = default;
};

/// Immutable collection S = {z_1, ..., z_n} with a common dimension d.
class Dataset {
 public:
  Dataset(std::vector<SparseExample> examples, std::size_t dimension);

  std::size_t size() const { return examples_.size(); }
  std::size_t dimension() const { return dimension_; }
  const SparseExample& operator[](std::size_t i) const { return examples_[i]; }
  const std::vector<SparseExample>& examples() const { return examples_; }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::vector<SparseExample> examples_;
  std::size_t dimension_;
};

/// Counter-based index stream. The value drawn at a given counter depends only
/// on (seed, counter), so two runs started from the same state see identical
/// index sequences.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;

  friend bool operator==(const RngStream&, const RngStream&) = default;
};

double dot(const WeightVector& a, const WeightVector& b);
double sparse_dot(const WeightVector& w, const SparseExample& x);
double norm(const WeightVector& v);
double squared_norm(const WeightVector& v);
double distance(const WeightVector& a, const WeightVector& b);
double squared_distance(const WeightVector& a, const WeightVector& b);
double l1_norm(const WeightVector& v);

WeightVector add(const WeightVector& a, const WeightVector& b);
WeightVector subtract(const WeightVector& a, const WeightVector& b);
WeightVector scale(const WeightVector& v, double factor);
/// y += alpha * x
void axpy(double alpha, const WeightVector& x, WeightVector& y);
/// y += alpha * x for a sparse x
void sparse_axpy(double alpha, const SparseExample& x, WeightVector& y);

/// Copy of `ds` with the example at `index` replaced.
Dataset make_neighbor(const Dataset& ds, std::size_t index, SparseExample replacement);

/// Uniform draw from {0, ..., n-1}; advances the counter by one.
std::size_t draw_index(RngStream& rng, std::size_t n);
/// The index `draw_index` would return `ahead` draws from now, without advancing.
std::size_t peek_index(const RngStream& rng, std::size_t n, std::uint64_t ahead = 0);
/// Uniform double in [0, 1); advances the counter by one.
double draw_uniform(RngStream& rng);
/// Standard normal draw (Box-Muller over two uniforms); advances the counter by two.
double draw_normal(RngStream& rng);

/// 64-bit mixing of two words; exposed for hashing and seeding.
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

void require_same_size(const WeightVector& a, const WeightVector& b, std::string_view what);

}  // namespace stagewise
