#include "stagewise/core.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace stagewise {

namespace {

__extension__ typedef unsigned __int128 u128;

std::uint64_t splitmix_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Word at stream position `counter`; `attempt` separates rejection retries.
std::uint64_t stream_word(std::uint64_t seed, std::uint64_t counter, std::uint64_t attempt) {
  return mix64(mix64(seed, counter), attempt);
}

std::size_t bounded_index(std::uint64_t seed, std::uint64_t counter, std::size_t n) {
  if (n == 0) throw std::invalid_argument("draw_index: n must be >= 1");
  const auto bound = static_cast<std::uint64_t>(n);
  // Lemire's multiply-shift with rejection; unbiased.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (std::uint64_t attempt = 0;; ++attempt) {
    const u128 m = static_cast<u128>(stream_word(seed, counter, attempt)) * bound;
    if (static_cast<std::uint64_t>(m) >= threshold) {
      return static_cast<std::size_t>(m >> 64);
    }
  }
}

}  // namespace

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return splitmix_finalize(splitmix_finalize(a + 0x9E3779B97F4A7C15ULL) ^ (b * 0xD6E8FEB86659FD93ULL + 1));
}

WeightVector::WeightVector(std::size_t dimension, double fill) : values_(dimension, fill) {
  if (!std::isfinite(fill)) throw NonFiniteError("WeightVector: non-finite fill value");
}

WeightVector::WeightVector(std::vector<double> values) : values_(std::move(values)) {
  require_finite("WeightVector");
}

WeightVector::WeightVector(std::initializer_list<double> values) : values_(values) {
  require_finite("WeightVector");
}

bool WeightVector::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void WeightVector::require_finite(std::string_view what) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw NonFiniteError(std::string(what) + ": non-finite coordinate at index " + std::to_string(i));
    }
  }
}

WeightVector WeightVector::basis(std::size_t dimension, std::size_t index) {
  if (index >= dimension) throw std::invalid_argument("WeightVector::basis: index out of range");
  WeightVector e(dimension);
  e[index] = 1.0;
  return e;
}

void SparseExample::validate(std::size_t dimension) const {
  if (!std::isfinite(label)) throw std::invalid_argument("SparseExample: non-finite label");
  for (std::size_t k = 0; k < features.size(); ++k) {
    const auto& f = features[k];
    if (f.index >= dimension) {
      throw std::invalid_argument("SparseExample: feature index " + std::to_string(f.index) +
                                  " >= dimension " + std::to_string(dimension));
    }
    if (k > 0 && features[k - 1].index >= f.index) {
      throw std::invalid_argument("SparseExample: feature indices must be strictly increasing");
    }
    if (!std::isfinite(f.value)) throw std::invalid_argument("SparseExample: non-finite feature value");
  }
}

double SparseExample::squared_norm() const {
  double s = 0.0;
  for (const auto& f : features) s += f.value * f.value;
  return s;
}

Dataset::Dataset(std::vector<SparseExample> examples, std::size_t dimension)
    : examples_(std::move(examples)), dimension_(dimension) {
  if (examples_.empty()) throw std::invalid_argument("Dataset: needs at least one example");
  if (dimension_ == 0) throw std::invalid_argument("Dataset: dimension must be >= 1");
  for (const auto& z : examples_) z.validate(dimension_);
}

void require_same_size(const WeightVector& a, const WeightVector& b, std::string_view what) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  }
}

double dot(const WeightVector& a, const WeightVector& b) {
  require_same_size(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sparse_dot(const WeightVector& w, const SparseExample& x) {
  double s = 0.0;
  for (const auto& f : x.features) {
    if (f.index >= w.size()) throw std::invalid_argument("sparse_dot: feature index out of range");
    s += w[f.index] * f.value;
  }
  return s;
}

double squared_norm(const WeightVector& v) {
  double s = 0.0;
  for (double x : v.values()) s += x * x;
  return s;
}

double norm(const WeightVector& v) { return std::sqrt(squared_norm(v)); }

double squared_distance(const WeightVector& a, const WeightVector& b) {
  require_same_size(a, b, "distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double distance(const WeightVector& a, const WeightVector& b) { return std::sqrt(squared_distance(a, b)); }

double l1_norm(const WeightVector& v) {
  double s = 0.0;
  for (double x : v.values()) s += std::abs(x);
  return s;
}

WeightVector add(const WeightVector& a, const WeightVector& b) {
  require_same_size(a, b, "add");
  WeightVector out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += b[i];
  out.require_finite("add");
  return out;
}

WeightVector subtract(const WeightVector& a, const WeightVector& b) {
  require_same_size(a, b, "subtract");
  WeightVector out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] -= b[i];
  out.require_finite("subtract");
  return out;
}

WeightVector scale(const WeightVector& v, double factor) {
  WeightVector out = v;
  for (double& x : out.values()) x *= factor;
  out.require_finite("scale");
  return out;
}

void axpy(double alpha, const WeightVector& x, WeightVector& y) {
  require_same_size(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void sparse_axpy(double alpha, const SparseExample& x, WeightVector& y) {
  for (const auto& f : x.features) {
    if (f.index >= y.size()) throw std::invalid_argument("sparse_axpy: feature index out of range");
    y[f.index] += alpha * f.value;
  }
}

Dataset make_neighbor(const Dataset& ds, std::size_t index, SparseExample replacement) {
  if (index >= ds.size()) {
    throw std::invalid_argument("make_neighbor: index " + std::to_string(index) + " out of range");
  }
  replacement.validate(ds.dimension());
  std::vector<SparseExample> examples = ds.examples();
  examples[index] = std::move(replacement);
  return Dataset(std::move(examples), ds.dimension());
}

std::size_t draw_index(RngStream& rng, std::size_t n) {
  const std::size_t i = bounded_index(rng.seed, rng.counter, n);
  ++rng.counter;
  return i;
}

std::size_t peek_index(const RngStream& rng, std::size_t n, std::uint64_t ahead) {
  return bounded_index(rng.seed, rng.counter + ahead, n);
}

double draw_uniform(RngStream& rng) {
  const std::uint64_t word = stream_word(rng.seed, rng.counter, 0);
  ++rng.counter;
  return static_cast<double>(word >> 11) * 0x1.0p-53;
}

double draw_normal(RngStream& rng) {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - draw_uniform(rng);
  const double u2 = draw_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace stagewise
