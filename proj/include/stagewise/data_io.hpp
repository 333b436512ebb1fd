#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "stagewise/core.hpp"
#include "stagewise/losses.hpp"

namespace stagewise {

/// Malformed libsvm input; `line` is 1-based (0 when not tied to a line).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& message);
  std::size_t line;
};

/// Reads "label idx:val idx:val ..." lines with 1-based, strictly increasing
/// indices. Blank lines and lines starting with '#' are skipped. The dimension
/// is the largest index seen, raised to d_hint when that is larger.
Dataset parse_libsvm(std::istream& in, std::optional<std::size_t> d_hint = std::nullopt);
Dataset load_libsvm(const std::string& path, std::optional<std::size_t> d_hint = std::nullopt);
/// Shortest round-trip decimal form; parse_libsvm reads it back exactly.
void write_libsvm(std::ostream& out, const Dataset& ds);
void save_libsvm(const std::string& path, const Dataset& ds);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

/// Order-sensitive digest of every (label, index, value) triple and d.
std::uint64_t dataset_hash(const Dataset& ds);
std::string hash_hex(std::uint64_t h);

struct QuadraticInstance {
  /// Rows x_i with labels y_i = x_i.w* + e_i (square loss).
  Dataset least_squares;
  /// Centered noise vectors xi_i = x_i (x_i.w* - y_i) for quadratic_synthetic.
  Dataset noise;
  std::shared_ptr<const QuadraticProblem> problem;
};

/// X = sqrt(n) U diag(sqrt(lambda)) V^T with U (n x d) orthonormal and
/// lambda log-spaced over [mu, L], so X^T X / n = V diag(lambda) V^T exactly
/// up to rounding. w* is a random unit vector. The label noise e is Gaussian
/// with standard deviation `noise`, projected orthogonal to the columns of X
/// so that X^T e = 0 and w* stays the exact least-squares minimizer.
QuadraticInstance gen_quadratic(std::size_t d, std::size_t n, double mu, double L, double noise, std::uint64_t seed);

/// Label-noise standard deviation for gen_quadratic that makes the per-example
/// gradient variance of the quadratic_synthetic loss about `sigma2`.
double quadratic_noise_for_sigma2(std::size_t d, std::size_t n, double mu, double L, double sigma2);

/// Sparse binary classification data: each row has `nnz` distinct random
/// features with Gaussian values, normalized to unit norm; labels are
/// sign(w_true.x) flipped with probability `flip`.
Dataset gen_sparse_classification(std::size_t n, std::size_t d, std::size_t nnz, double flip, std::uint64_t seed);

struct SplitSpec {
  double test_fraction = 0.25;
  double validation_fraction = 0.0;
  std::uint64_t split_seed = 0;
};

struct Split {
  Dataset train;
  std::optional<Dataset> validation;
  std::optional<Dataset> test;
};

/// Deterministic permutation split; part sizes are round(n * fraction).
Split split(const Dataset& ds, const SplitSpec& spec);

}  // namespace stagewise
