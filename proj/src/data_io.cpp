#include "stagewise/data_io.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string_view>

namespace stagewise {

ParseError::ParseError(std::size_t line_, const std::string& message)
    : std::runtime_error(line_ > 0 ? "line " + std::to_string(line_) + ": " + message : message), line(line_) {}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_real(std::string_view tok, std::size_t line, const char* what) {
  // from_chars rejects a leading '+', which libsvm labels commonly carry.
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw ParseError(line, std::string("non-numeric ") + what + " '" + std::string(tok) + "'");
  }
  return v;
}

std::uint64_t parse_index(std::string_view tok, std::size_t line) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(line, "non-numeric feature index '" + std::string(tok) + "'");
  }
  if (v < 1) throw ParseError(line, "feature indices are 1-based; got 0");
  if (v > std::numeric_limits<std::uint32_t>::max()) throw ParseError(line, "feature index too large");
  return v;
}

}  // namespace

Dataset parse_libsvm(std::istream& in, std::optional<std::size_t> d_hint) {
  std::vector<SparseExample> examples;
  std::size_t max_index = 0;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    SparseExample ex;
    std::size_t pos = 0;
    bool first = true;
    while (pos < line.size()) {
      const auto start = line.find_first_not_of(" \t", pos);
      if (start == std::string_view::npos) break;
      auto end = line.find_first_of(" \t", start);
      if (end == std::string_view::npos) end = line.size();
      const std::string_view tok = line.substr(start, end - start);
      pos = end;
      if (first) {
        ex.label = parse_real(tok, line_no, "label");
        first = false;
        continue;
      }
      const auto colon = tok.find(':');
      if (colon == std::string_view::npos) throw ParseError(line_no, "expected idx:val, got '" + std::string(tok) + "'");
      const std::uint64_t idx = parse_index(tok.substr(0, colon), line_no);
      const double val = parse_real(tok.substr(colon + 1), line_no, "feature value");
      const auto zero_based = static_cast<std::uint32_t>(idx - 1);
      if (!ex.features.empty() && ex.features.back().index >= zero_based) {
        throw ParseError(line_no, "feature indices must be strictly increasing");
      }
      ex.features.push_back({zero_based, val});
      max_index = std::max<std::size_t>(max_index, idx);
    }
    examples.push_back(std::move(ex));
  }
  if (examples.empty()) throw ParseError(0, "no examples in input");
  std::size_t d = std::max<std::size_t>(max_index, 1);
  if (d_hint && *d_hint > d) d = *d_hint;
  return Dataset(std::move(examples), d);
}

Dataset load_libsvm(const std::string& path, std::optional<std::size_t> d_hint) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file '" + path + "'");
  try {
    return parse_libsvm(in, d_hint);
  } catch (const ParseError& e) {
    throw ParseError(e.line, path + ": " + e.what());
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

void write_libsvm(std::ostream& out, const Dataset& ds) {
  for (const auto& z : ds.examples()) {
    out << format_double(z.label);
    for (const auto& f : z.features) out << ' ' << (f.index + 1) << ':' << format_double(f.value);
    out << '\n';
  }
}

void save_libsvm(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file '" + path + "'");
  write_libsvm(out, ds);
}

std::uint64_t dataset_hash(const Dataset& ds) {
  std::uint64_t h = mix64(0xD1B54A32D192ED03ULL, ds.dimension());
  for (const auto& z : ds.examples()) {
    h = mix64(h, std::bit_cast<std::uint64_t>(z.label));
    h = mix64(h, z.features.size());
    for (const auto& f : z.features) {
      h = mix64(h, f.index);
      h = mix64(h, std::bit_cast<std::uint64_t>(f.value));
    }
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << h;
  return s.str();
}

namespace {

SparseExample dense_row(const Eigen::VectorXd& x, double label) {
  SparseExample ex;
  ex.label = label;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (x[j] != 0.0) ex.features.push_back({static_cast<std::uint32_t>(j), x[j]});
  }
  return ex;
}

}  // namespace

QuadraticInstance gen_quadratic(std::size_t d, std::size_t n, double mu, double L, double noise, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("gen_quadratic: d must be >= 1");
  if (n < d) throw std::invalid_argument("gen_quadratic: infeasible spectrum (n < d)");
  if (!(mu > 0.0) || !(L >= mu) || !std::isfinite(L)) throw std::invalid_argument("gen_quadratic: need 0 < mu <= L");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw std::invalid_argument("gen_quadratic: noise must be >= 0");

  std::vector<double> lambda(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double frac = d == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(d - 1);
    lambda[j] = mu * std::pow(L / mu, frac);
  }
  lambda.front() = mu;
  lambda.back() = L;

  RngStream rng{mix64(seed, 0x9E4ULL), 0};
  const std::uint64_t rotation_seed = mix64(seed, 0x207ULL) | 1ULL;
  WeightVector w_star(d);
  for (std::size_t j = 0; j < d; ++j) w_star[j] = draw_normal(rng);
  w_star = scale(w_star, 1.0 / norm(w_star));
  auto problem = std::make_shared<const QuadraticProblem>(lambda, w_star, rotation_seed);

  const auto nn = static_cast<Eigen::Index>(n);
  const auto dd = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd gauss(nn, dd);
  for (Eigen::Index i = 0; i < nn; ++i) {
    for (Eigen::Index j = 0; j < dd; ++j) gauss(i, j) = draw_normal(rng);
  }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  const Eigen::MatrixXd U = qr.householderQ() * Eigen::MatrixXd::Identity(nn, dd);

  // V^T as a dense matrix: row j of V^T is eigenvector j.
  Eigen::MatrixXd Vt(dd, dd);
  for (std::size_t j = 0; j < d; ++j) {
    const WeightVector v = problem->eigenvector(j);
    for (std::size_t c = 0; c < d; ++c) Vt(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = v[c];
  }
  Eigen::VectorXd root(dd);
  for (Eigen::Index j = 0; j < dd; ++j) root[j] = std::sqrt(lambda[static_cast<std::size_t>(j)]);
  const Eigen::MatrixXd X = std::sqrt(static_cast<double>(n)) * U * root.asDiagonal() * Vt;

  Eigen::VectorXd e(nn);
  for (Eigen::Index i = 0; i < nn; ++i) e[i] = noise * draw_normal(rng);
  e -= U * (U.transpose() * e);

  Eigen::VectorXd ws(dd);
  for (Eigen::Index j = 0; j < dd; ++j) ws[j] = w_star[static_cast<std::size_t>(j)];
  const Eigen::VectorXd fitted = X * ws;

  std::vector<SparseExample> ls_rows;
  std::vector<SparseExample> noise_rows;
  ls_rows.reserve(n);
  noise_rows.reserve(n);
  for (Eigen::Index i = 0; i < nn; ++i) {
    const Eigen::VectorXd x = X.row(i).transpose();
    ls_rows.push_back(dense_row(x, fitted[i] + e[i]));
    noise_rows.push_back(dense_row(-e[i] * x, 0.0));
  }
  return {Dataset(std::move(ls_rows), d), Dataset(std::move(noise_rows), d), std::move(problem)};
}

double quadratic_noise_for_sigma2(std::size_t d, std::size_t n, double mu, double L, double sigma2) {
  if (n <= d) throw std::invalid_argument("quadratic_noise_for_sigma2: need n > d");
  if (!(sigma2 >= 0.0)) throw std::invalid_argument("quadratic_noise_for_sigma2: sigma2 must be >= 0");
  // sigma^2 = (1/n) sum e_i^2 ||x_i||^2 with E||x_i||^2 = tr(H) and the
  // projection keeping a (n - d)/n share of the noise energy.
  double trace = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double frac = d == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(d - 1);
    trace += mu * std::pow(L / mu, frac);
  }
  const double keep = static_cast<double>(n - d) / static_cast<double>(n);
  return std::sqrt(sigma2 / (trace * keep));
}

Dataset gen_sparse_classification(std::size_t n, std::size_t d, std::size_t nnz, double flip, std::uint64_t seed) {
  if (n < 1 || d < 1) throw std::invalid_argument("gen_sparse_classification: n and d must be >= 1");
  if (nnz < 1 || nnz > d) throw std::invalid_argument("gen_sparse_classification: need 1 <= nnz <= d");
  if (!(flip >= 0.0 && flip < 0.5)) throw std::invalid_argument("gen_sparse_classification: flip must lie in [0, 0.5)");
  RngStream rng{mix64(seed, 0xC1A55ULL), 0};
  WeightVector w_true(d);
  for (std::size_t j = 0; j < d; ++j) w_true[j] = draw_normal(rng);

  std::vector<SparseExample> rows;
  rows.reserve(n);
  std::vector<std::uint32_t> picked;
  for (std::size_t i = 0; i < n; ++i) {
    picked.clear();
    while (picked.size() < nnz) {
      const auto j = static_cast<std::uint32_t>(draw_index(rng, d));
      if (std::find(picked.begin(), picked.end(), j) == picked.end()) picked.push_back(j);
    }
    std::sort(picked.begin(), picked.end());
    SparseExample ex;
    double sq = 0.0;
    for (std::uint32_t j : picked) {
      const double v = draw_normal(rng);
      ex.features.push_back({j, v});
      sq += v * v;
    }
    const double inv = sq > 0.0 ? 1.0 / std::sqrt(sq) : 0.0;
    for (auto& f : ex.features) f.value *= inv;
    double label = sparse_dot(w_true, ex) >= 0.0 ? 1.0 : -1.0;
    if (draw_uniform(rng) < flip) label = -label;
    ex.label = label;
    rows.push_back(std::move(ex));
  }
  return Dataset(std::move(rows), d);
}

Split split(const Dataset& ds, const SplitSpec& spec) {
  if (!(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0)) {
    throw std::invalid_argument("split: test_fraction must lie in [0, 1)");
  }
  if (!(spec.validation_fraction >= 0.0 && spec.validation_fraction < 1.0)) {
    throw std::invalid_argument("split: validation_fraction must lie in [0, 1)");
  }
  if (spec.test_fraction + spec.validation_fraction >= 1.0) {
    throw std::invalid_argument("split: fractions must sum to < 1");
  }
  const std::size_t n = ds.size();
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.test_fraction));
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.validation_fraction));
  if (n_test + n_val >= n) throw std::invalid_argument("split: training part would be empty");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  RngStream rng{mix64(spec.split_seed, 0x5B117ULL), 0};
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[draw_index(rng, i)]);

  const auto take = [&](std::size_t from, std::size_t count) {
    std::vector<SparseExample> part;
    part.reserve(count);
    for (std::size_t i = from; i < from + count; ++i) part.push_back(ds[perm[i]]);
    return part;
  };
  Split out{Dataset(take(n_test + n_val, n - n_test - n_val), ds.dimension()), std::nullopt, std::nullopt};
  if (n_test > 0) out.test.emplace(take(0, n_test), ds.dimension());
  if (n_val > 0) out.validation.emplace(take(n_test, n_val), ds.dimension());
  return out;
}

}  // namespace stagewise
