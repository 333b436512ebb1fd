#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stagewise/data_io.hpp"
#include "stagewise/geometry.hpp"
#include "stagewise/losses.hpp"
#include "stagewise/optim.hpp"

namespace stagewise {

/// Invalid configuration; `field` is the dotted path of the offending entry.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message);
  std::string field;
};

enum class DataSource { file, quadratic, sparse_classification };

struct DatasetSpec {
  DataSource source = DataSource::quadratic;
  std::string path;                       // file
  std::optional<std::size_t> dimension;   // file: dimension hint
  std::size_t d = 50;                     // generators
  std::size_t n = 2000;
  double mu = 0.01;                       // quadratic
  double L = 1.0;
  double noise = 0.0;
  std::optional<double> target_sigma2;    // quadratic: overrides noise
  std::size_t nnz = 10;                   // sparse_classification
  double flip = 0.05;
  std::uint64_t seed = 1;
  SplitSpec split{0.0, 0.0, 0};
};

struct LossSpec {
  LossKind kind = LossKind::quadratic_synthetic;
  double huber_delta = 1.0;
  std::optional<double> L;
  std::optional<double> G;
  std::optional<double> sigma2;
};

enum class AlgorithmType { sgd, start, variant, validation };

struct AlgorithmSpec {
  std::string name;
  AlgorithmType type = AlgorithmType::sgd;
  // sgd
  StepSchedule schedule;
  std::uint64_t iterations = 0;  // 0: the experiment budget
  // start
  Regime regime = Regime::convex;
  std::optional<double> mu;      // PL constant; required unless the loss is quadratic
  std::optional<double> gamma;   // stagewise gamma; absent means infinite for variants
  std::optional<double> alpha;
  double theta = 1.0;
  double target_ratio = 1.0 / 64.0;  // target eps = eps0 * target_ratio
  // variant
  Variant variant = Variant::V1;
  std::vector<std::uint64_t> stage_lengths;
  double eta0 = 0.1;
  double decay = 0.5;
  // validation
  ValidationRule rule;
};

struct SweepSpec {
  std::vector<double> mu_values;
  double target_ratio = 1.0 / 64.0;
  double cap_factor = 100.0;
};

struct StabilitySpec {
  std::size_t trials = 100;
  std::size_t pool_size = 50;
  bool convex = true;
  bool write_traces = true;
};

struct DiagnoseSpec {
  std::size_t probes = 200;
  std::size_t lanczos_probes = 5;
  std::size_t lanczos_iters = 20;
  std::uint64_t reference_budget = 100000;
  std::string cache_dir;
};

struct BoundsSpec {
  double L = 1.0;
  double G = 1.0;
  double mu = 0.1;
  std::vector<std::size_t> n_values{100};
  std::vector<double> T_values{1000};
  std::optional<double> gamma;
  std::vector<double> etas;
  std::vector<std::uint64_t> stage_lengths;
  double c = 1.0;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  LossSpec loss;
  FeasibleSet set;
  std::vector<AlgorithmSpec> algorithms;
  std::vector<std::uint64_t> seeds{1};
  std::uint64_t budget = 0;      // 0: the largest prescribed stage budget
  std::uint64_t eval_every = 0;  // 0: budget / 200
  std::string output = "out";
  SweepSpec sweep;
  StabilitySpec stability;
  DiagnoseSpec diagnose;
  BoundsSpec bounds;
};

/// Parses and validates a JSON configuration; every precondition is checked
/// here so runs fail before any work is done.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

}  // namespace stagewise
