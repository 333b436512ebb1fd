#include "stagewise/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "stagewise/data_io.hpp"
#include "stagewise/parallel.hpp"

namespace stagewise {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

double quadratic_noise(const DatasetSpec& d) {
  return d.target_sigma2 ? quadratic_noise_for_sigma2(d.d, d.n, d.mu, d.L, *d.target_sigma2) : d.noise;
}

std::string sanitize(const std::string& name) {
  std::string s = name;
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return s;
}

}  // namespace

Problem build_problem(const ExperimentConfig& cfg, std::optional<std::uint64_t> data_seed) {
  const DatasetSpec& d = cfg.dataset;
  const std::uint64_t seed = data_seed.value_or(d.seed);
  if (d.source == DataSource::quadratic) {
    if (d.split.test_fraction > 0.0 || d.split.validation_fraction > 0.0) {
      throw ConfigError("dataset.test_fraction", "quadratic datasets are not split (the noise must stay centered)");
    }
    QuadraticInstance inst = gen_quadratic(d.d, d.n, d.mu, d.L, quadratic_noise(d), seed);
    LossModel m = LossModel::quadratic(inst.problem, inst.noise, cfg.set);
    if (cfg.loss.L || cfg.loss.G) m = m.with_constants(cfg.loss.L.value_or(m.smoothness()), cfg.loss.G.value_or(m.lipschitz()));
    if (cfg.loss.sigma2) m = m.with_variance(*cfg.loss.sigma2);
    WeightVector w0(d.d);
    return {std::move(inst.noise), std::nullopt, std::nullopt, inst.problem, std::move(m), cfg.set, std::move(w0), 0.0};
  }

  Dataset all = d.source == DataSource::file ? load_libsvm(d.path, d.dimension)
                                             : gen_sparse_classification(d.n, d.d, d.nnz, d.flip, seed);
  Split parts = split(all, d.split);
  LossModel m = LossModel::linear(cfg.loss.kind, parts.train, cfg.set, cfg.loss.huber_delta);
  if (cfg.loss.L || cfg.loss.G) m = m.with_constants(cfg.loss.L.value_or(m.smoothness()), cfg.loss.G.value_or(m.lipschitz()));
  if (cfg.loss.sigma2) m = m.with_variance(*cfg.loss.sigma2);
  WeightVector w0(all.dimension());
  return {std::move(parts.train), std::move(parts.validation), std::move(parts.test), nullptr, std::move(m), cfg.set,
          std::move(w0), std::nullopt};
}

ReferenceSolution reference_for(const Problem& p, const ExperimentConfig& cfg, std::uint64_t seed) {
  if (p.f_star && p.quadratic) return {p.quadratic->minimizer(), *p.f_star, "analytic minimizer"};
  const std::string cache = cfg.diagnose.cache_dir.empty() ? (fs::path(cfg.output) / "cache").string()
                                                           : cfg.diagnose.cache_dir;
  return cached_reference(p.model, p.train, p.set, cfg.diagnose.reference_budget, RngStream{seed, 0}, cache);
}

StageSchedule resolve_stage_schedule(const AlgorithmSpec& a, const Problem& p, double f_star) {
  RegimeInputs in;
  if (a.mu) {
    in.mu = *a.mu;
  } else if (p.quadratic) {
    in.mu = p.quadratic->mu();
  } else {
    throw ConfigError("algorithms." + a.name + ".mu", "needed for non-quadratic losses");
  }
  in.L = p.model.smoothness();
  in.sigma2 = p.model.variance();
  in.G = p.model.lipschitz();
  in.theta = a.theta;
  in.gamma = a.gamma;
  in.alpha = a.alpha;
  in.eps0 = RiskEvaluator(p.model, p.train)(p.w0) - f_star;
  if (!(in.eps0 > 0.0)) throw std::domain_error("eps0 = F_S(w0) - f* must be > 0 for a stage schedule");
  in.target_eps = in.eps0 * a.target_ratio;
  return make_stage_schedule(a.regime, in);
}

RunRecord run_algorithm(const AlgorithmSpec& a, const Problem& p, double f_star, std::uint64_t budget,
                        std::uint64_t seed, const RunOptions& opt) {
  RngStream rng{seed, 0};
  switch (a.type) {
    case AlgorithmType::sgd:
      return sgd_run(p.model, p.train, p.set, a.schedule, p.w0, a.iterations > 0 ? a.iterations : budget, rng, opt);
    case AlgorithmType::start:
      return start_run(p.model, p.train, p.set, resolve_stage_schedule(a, p, f_star), p.w0, rng, opt);
    case AlgorithmType::variant:
      return variant_run(p.model, p.train, p.set, a.variant, a.stage_lengths, a.eta0, a.decay,
                         a.gamma ? Gamma::finite(*a.gamma) : Gamma::infinite(), p.w0, rng, opt);
    case AlgorithmType::validation: {
      if (!p.validation) throw ConfigError("dataset.validation_fraction", "validation stagewise runs need a validation split");
      ValidationRule rule = a.rule;
      rule.budget = budget;
      return validation_stagewise_run(p.model, p.train, *p.validation, p.set, rule, p.w0, rng, opt);
    }
  }
  throw std::logic_error("run_algorithm: bad type");
}

std::uint64_t resolve_budget(const ExperimentConfig& cfg, const Problem& p, double f_star) {
  if (cfg.budget > 0) return cfg.budget;
  std::uint64_t best = 0;
  for (const auto& a : cfg.algorithms) {
    if (a.type == AlgorithmType::start) best = std::max(best, resolve_stage_schedule(a, p, f_star).total_iterations());
    if (a.type == AlgorithmType::variant) {
      best = std::max(best, std::accumulate(a.stage_lengths.begin(), a.stage_lengths.end(), std::uint64_t{0}));
    }
  }
  if (best == 0) throw ConfigError("budget", "must be > 0 when no start or variant algorithm fixes it");
  return best;
}

void write_run_csv(std::ostream& out, const RunRecord& rec) {
  out << "cumulative_iteration,stage,step_size,train_error,test_error,gen_gap\n";
  for (const auto& e : rec.log) {
    out << e.cumulative << ',' << e.stage << ',' << format_double(e.step_size) << ',' << format_double(e.train_error)
        << ',' << format_double(e.test_error) << ',' << format_double(e.test_error - e.train_error) << '\n';
  }
}

std::vector<AggregateRow> aggregate(const std::vector<std::string>& names,
                                    const std::vector<std::vector<RunRecord>>& runs) {
  std::vector<AggregateRow> rows;
  for (std::size_t a = 0; a < names.size(); ++a) {
    struct Acc {
      std::vector<double> train, test, gap;
    };
    std::map<std::uint64_t, Acc> by_iter;
    for (const auto& rec : runs[a]) {
      std::map<std::uint64_t, bool> seen;
      for (const auto& e : rec.log) {
        if (seen[e.cumulative]) continue;  // keep the first row at a repeated iteration
        seen[e.cumulative] = true;
        Acc& acc = by_iter[e.cumulative];
        acc.train.push_back(e.train_error);
        acc.test.push_back(e.test_error);
        acc.gap.push_back(e.test_error - e.train_error);
      }
    }
    const auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
      mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    };
    for (const auto& [iter, acc] : by_iter) {
      if (acc.train.size() != runs[a].size()) continue;
      AggregateRow r;
      r.algorithm = names[a];
      r.cumulative = iter;
      r.seeds = acc.train.size();
      stats(acc.train, r.mean_train, r.std_train);
      stats(acc.test, r.mean_test, r.std_test);
      stats(acc.gap, r.mean_gap, r.std_gap);
      rows.push_back(r);
    }
  }
  return rows;
}

void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << "algorithm,cumulative_iteration,seeds,mean_train_error,std_train_error,mean_test_error,std_test_error,"
         "mean_gen_gap,std_gen_gap\n";
  for (const auto& r : rows) {
    out << r.algorithm << ',' << r.cumulative << ',' << r.seeds << ',' << format_double(r.mean_train) << ','
        << format_double(r.std_train) << ',' << format_double(r.mean_test) << ',' << format_double(r.std_test) << ','
        << format_double(r.mean_gap) << ',' << format_double(r.std_gap) << '\n';
  }
}

namespace {

void write_plot_script(const fs::path& path) {
  std::ofstream out = open_out(path);
  out << R"(#!/usr/bin/env python3
"""Plots mean training/testing error and generalization gap from aggregate.csv."""
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

here = os.path.dirname(os.path.abspath(__file__))
df = pd.read_csv(os.path.join(here, "aggregate.csv"))
fig, axes = plt.subplots(1, 3, figsize=(15, 4))
for name, g in df.groupby("algorithm", sort=False):
    for ax, col in zip(axes, ["mean_train_error", "mean_test_error", "mean_gen_gap"]):
        ax.plot(g["cumulative_iteration"], g[col], label=name)
for ax, title in zip(axes, ["training error", "testing error", "generalization gap"]):
    ax.set_xlabel("iteration")
    ax.set_title(title)
axes[0].set_yscale("log")
axes[0].legend()
fig.tight_layout()
target = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "compare.png")
fig.savefig(target, dpi=120)
)";
}

}  // namespace

CompareResult run_compare(const ExperimentConfig& cfg) {
  if (cfg.algorithms.empty()) throw ConfigError("algorithms", "compare needs at least one algorithm");
  const Problem p = build_problem(cfg);
  const bool needs_ref = std::any_of(cfg.algorithms.begin(), cfg.algorithms.end(),
                                     [](const AlgorithmSpec& a) { return a.type == AlgorithmType::start; });
  const double f_star = p.f_star ? *p.f_star
                        : needs_ref ? reference_for(p, cfg, cfg.seeds.front()).f_star
                                    : 0.0;
  const std::uint64_t budget = resolve_budget(cfg, p, f_star);
  RunOptions opt;
  opt.eval_every = cfg.eval_every > 0 ? cfg.eval_every : std::max<std::uint64_t>(1, budget / 200);
  opt.test = p.test ? &*p.test : nullptr;

  CompareResult res;
  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  const std::size_t S = cfg.seeds.size();
  for (const auto& a : cfg.algorithms) res.names.push_back(a.name);
  const auto flat = parallel_map(cfg.algorithms.size() * S, [&](std::size_t job) {
    const auto& a = cfg.algorithms[job / S];
    const std::uint64_t seed = cfg.seeds[job % S];
    try {
      return run_algorithm(a, p, f_star, budget, seed, opt);
    } catch (const std::exception& e) {
      throw std::runtime_error("algorithm '" + a.name + "', seed " + std::to_string(seed) + ": " + e.what());
    }
  });
  res.runs.assign(cfg.algorithms.size(), {});
  for (std::size_t job = 0; job < flat.size(); ++job) {
    const auto& a = cfg.algorithms[job / S];
    const std::uint64_t seed = cfg.seeds[job % S];
    const fs::path file = dir / (sanitize(a.name) + "_seed" + std::to_string(seed) + ".csv");
    std::ofstream out = open_out(file);
    write_run_csv(out, flat[job]);
    res.files.push_back(file.string());
    res.runs[job / S].push_back(flat[job]);
  }
  std::ofstream agg = open_out(dir / "aggregate.csv");
  write_aggregate_csv(agg, aggregate(res.names, res.runs));
  write_plot_script(dir / "plot_compare.py");
  return res;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 paired points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

namespace {

double median_with_misses(const std::vector<std::optional<std::uint64_t>>& v) {
  std::vector<double> x;
  for (const auto& e : v) x.push_back(e ? static_cast<double>(*e) : std::numeric_limits<double>::infinity());
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  return n % 2 == 1 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

}  // namespace

SweepReport run_scaling_sweep(const ExperimentConfig& base, const std::vector<double>& mu_values) {
  if (base.dataset.source != DataSource::quadratic) throw ConfigError("dataset.source", "the sweep needs a quadratic dataset");
  if (mu_values.size() < 3) throw std::invalid_argument("scaling sweep: need >= 3 mu values (insufficient points)");
  const auto [lo, hi] = std::minmax_element(mu_values.begin(), mu_values.end());
  if (*hi / *lo < 100.0 * (1.0 - 1e-12)) throw std::invalid_argument("scaling sweep: mu values must span >= 2 decades");

  SweepReport rep;
  for (double mu : mu_values) {
    ExperimentConfig cfg = base;
    cfg.dataset.mu = mu;
    if (mu > cfg.dataset.L) throw ConfigError("sweep.mu_values", "entries must not exceed dataset.L");
    SweepPoint pt;
    pt.mu = mu;
    struct SeedResult {
      std::optional<std::uint64_t> sgd, start;
      std::uint64_t prescribed = 0;
    };
    const auto results = parallel_map(cfg.seeds.size(), [&](std::size_t s) {
      const std::uint64_t seed = cfg.seeds[s];
      const Problem p = build_problem(cfg, mix64(cfg.dataset.seed, seed));
      const double eps0 = RiskEvaluator(p.model, p.train)(p.w0);
      const double target = eps0 * base.sweep.target_ratio;
      const double L = p.model.smoothness();
      const double sigma2 = p.model.variance();

      RegimeInputs in;
      in.eps0 = eps0;
      in.target_eps = target;
      in.mu = mu;
      in.L = L;
      in.sigma2 = sigma2;
      const StageSchedule sched = make_stage_schedule(Regime::convex, in);

      RunOptions opt;
      opt.record_log = false;
      opt.stop_below = target;
      SeedResult r;
      r.prescribed = sched.total_iterations();
      RngStream rng_start{seed, 0};
      r.start = start_run(p.model, p.train, p.set, sched, p.w0, rng_start, opt).reached_at;

      const double G2 = sigma2 + 2.0 * L * eps0;
      const double theory_T = L * G2 / (2.0 * mu * mu * target);
      const auto cap = static_cast<std::uint64_t>(std::ceil(std::min(base.sweep.cap_factor * theory_T, 1e12)));
      opt.eval_every = 1;
      RngStream rng_sgd{seed, 0};
      r.sgd = sgd_run(p.model, p.train, p.set, StepSchedule::one_over_t(mu), p.w0, cap, rng_sgd, opt).reached_at;
      return r;
    });
    for (const auto& r : results) {
      pt.sgd_iterations.push_back(r.sgd);
      pt.start_iterations.push_back(r.start);
      pt.start_prescribed.push_back(r.prescribed);
    }
    pt.sgd_median = median_with_misses(pt.sgd_iterations);
    pt.start_median = median_with_misses(pt.start_iterations);
    std::vector<std::optional<std::uint64_t>> presc(pt.start_prescribed.begin(), pt.start_prescribed.end());
    pt.start_prescribed_median = median_with_misses(presc);
    rep.points.push_back(std::move(pt));
  }
  std::vector<double> inv_mu, sgd, start, presc;
  for (const auto& pt : rep.points) {
    inv_mu.push_back(1.0 / pt.mu);
    sgd.push_back(pt.sgd_median);
    start.push_back(pt.start_median);
    presc.push_back(pt.start_prescribed_median);
  }
  const auto slope_or_nan = [&](const std::vector<double>& y) {
    for (double v : y) {
      if (!std::isfinite(v) || v <= 0.0) return kNaN;
    }
    return loglog_slope(inv_mu, y);
  };
  rep.sgd_slope = slope_or_nan(sgd);
  rep.start_slope = slope_or_nan(start);
  rep.start_prescribed_slope = slope_or_nan(presc);
  return rep;
}

void write_sweep_csv(std::ostream& out, const SweepReport& rep) {
  out << "mu,algorithm,seed_index,iterations_to_target,reached\n";
  for (const auto& pt : rep.points) {
    for (std::size_t s = 0; s < pt.sgd_iterations.size(); ++s) {
      const auto& v = pt.sgd_iterations[s];
      out << format_double(pt.mu) << ",sgd," << s << ',' << (v ? std::to_string(*v) : "") << ',' << (v ? 1 : 0) << '\n';
    }
    for (std::size_t s = 0; s < pt.start_iterations.size(); ++s) {
      const auto& v = pt.start_iterations[s];
      out << format_double(pt.mu) << ",start," << s << ',' << (v ? std::to_string(*v) : "") << ',' << (v ? 1 : 0)
          << '\n';
    }
  }
}

RunRecord run_stage_by_validation(const ExperimentConfig& cfg, const ValidationRule& rule, std::uint64_t seed) {
  const Problem p = build_problem(cfg);
  if (!p.validation) throw ConfigError("dataset.validation_fraction", "must be > 0 for validation-based stages");
  RngStream rng{seed, 0};
  RunOptions opt;
  opt.eval_every = cfg.eval_every > 0 ? cfg.eval_every : std::max<std::uint64_t>(1, rule.budget / 200);
  opt.test = p.test ? &*p.test : nullptr;
  return validation_stagewise_run(p.model, p.train, *p.validation, p.set, rule, p.w0, rng, opt);
}

std::vector<StabilityRow> run_stability(const ExperimentConfig& cfg) {
  if (cfg.algorithms.empty()) throw ConfigError("algorithms", "stability needs at least one algorithm");
  const Problem p = build_problem(cfg);
  if (!p.test) throw ConfigError("dataset.test_fraction", "stability needs a test split as the replacement pool");
  std::vector<SparseExample> pool_rows;
  for (std::size_t i = 0; i < std::min(cfg.stability.pool_size, p.test->size()); ++i) pool_rows.push_back((*p.test)[i]);
  const Dataset pool(std::move(pool_rows), p.train.dimension());
  const bool needs_ref = std::any_of(cfg.algorithms.begin(), cfg.algorithms.end(),
                                     [](const AlgorithmSpec& a) { return a.type == AlgorithmType::start; });
  const double f_star = p.f_star ? *p.f_star : needs_ref ? reference_for(p, cfg, cfg.seeds.front()).f_star : 0.0;
  const std::uint64_t budget = resolve_budget(cfg, p, f_star);
  const double L = p.model.smoothness();
  const double G = p.model.lipschitz();
  const std::size_t n = p.train.size();

  std::vector<StabilityRow> rows;
  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  for (const auto& a : cfg.algorithms) {
    TwinAlgorithm algo;
    double bound = kNaN;
    switch (a.type) {
      case AlgorithmType::sgd: {
        const std::uint64_t T = a.iterations > 0 ? a.iterations : budget;
        algo = TwinAlgorithm::sgd(a.schedule, T);
        if (a.schedule.kind == ScheduleKind::poly_one_over_t) {
          try {
            bound = bound_sgd_stability(L, G, a.schedule.param, n, static_cast<double>(T), cfg.stability.convex);
          } catch (const std::domain_error&) {
            bound = kNaN;
          }
        }
        break;
      }
      case AlgorithmType::start:
      case AlgorithmType::variant: {
        const StageSchedule sched =
            a.type == AlgorithmType::start
                ? resolve_stage_schedule(a, p, f_star)
                : practical_schedule(a.variant, a.stage_lengths, a.eta0, a.decay,
                                     a.gamma ? Gamma::finite(*a.gamma) : Gamma::infinite());
        algo = TwinAlgorithm::from_schedule(sched);
        bound = bound_start_stability(G, sched.gamma, sched.etas(), sched.lengths(), n);
        break;
      }
      case AlgorithmType::validation:
        throw ConfigError("algorithms." + a.name + ".type", "validation runs have no fixed schedule to twin");
    }
    StabilityRow row{a.name, stability_experiment(p.model, p.train, pool, p.set, algo, p.w0, cfg.stability.trials,
                                                  cfg.seeds.front(), cfg.stability.convex),
                     bound};
    if (cfg.stability.write_traces) {
      const StabilityTrial& t0 = row.summary.trials.front();
      RngStream pick{mix64(t0.seed, 0x5A9ULL), 0};
      draw_index(pick, p.train.size());
      const SparseExample& repl = pool[draw_index(pick, pool.size())];
      StabilityTrace tr = twin_run(p.model, p.train, p.set, t0.swap_index, repl, algo, p.w0, t0.seed);
      check_recurrence(tr, L, G, cfg.stability.convex);
      std::ofstream out = open_out(dir / ("trace_" + sanitize(a.name) + ".csv"));
      write_trace_csv(out, tr);
    }
    rows.push_back(std::move(row));
  }
  std::ofstream out = open_out(dir / "stability_summary.csv");
  out << "algorithm,trials,mean_G_delta,bound,mean_loss_change,checked_steps,violations\n";
  for (const auto& r : rows) {
    out << r.algorithm << ',' << r.summary.trials.size() << ',' << format_double(r.summary.mean_G_delta) << ','
        << format_double(r.bound) << ',' << format_double(r.summary.mean_loss_change) << ',' << r.summary.total_steps
        << ',' << r.summary.total_violations << '\n';
  }
  return rows;
}

DiagnoseResult run_diagnose(const ExperimentConfig& cfg) {
  const Problem p = build_problem(cfg);
  const std::uint64_t seed = cfg.seeds.front();
  DiagnoseResult res;
  res.reference = reference_for(p, cfg, seed);

  AlgorithmSpec a;
  if (!cfg.algorithms.empty()) {
    a = cfg.algorithms.front();
  } else {
    a.name = "V1";
    a.type = AlgorithmType::variant;
    a.variant = Variant::V1;
    a.stage_lengths = {2000, 2000, 2000, 2000, 2000};
    a.eta0 = 1.0 / p.model.smoothness();
  }
  const std::uint64_t budget = resolve_budget(cfg, p, res.reference.f_star);
  std::vector<Probe> trajectory;
  RunOptions opt;
  opt.record_log = false;
  opt.eval_every = std::max<std::uint64_t>(1, budget / std::max<std::size_t>(1, cfg.diagnose.probes));
  opt.on_eval = [&](std::uint64_t it, const WeightVector& w) { trajectory.push_back({it, w}); };
  run_algorithm(a, p, res.reference.f_star, budget, seed, opt);
  const auto probes = select_probes(trajectory, cfg.diagnose.probes);
  res.report = assess_assumptions(p.model, p.train, probes, res.reference, cfg.diagnose.lanczos_probes,
                                  cfg.diagnose.lanczos_iters, RngStream{seed, 0});

  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  {
    std::ofstream out = open_out(dir / "probes.csv");
    write_probe_csv(out, res.report);
  }
  {
    std::ofstream out = open_out(dir / "lanczos.csv");
    write_lanczos_csv(out, res.report);
  }
  {
    std::ofstream out = open_out(dir / "reference.json");
    out << serialize_reference(res.reference) << '\n';
  }
  return res;
}

void write_bounds_table(std::ostream& out, const BoundsSpec& b) {
  out << "n,T,sgd_convex,sgd_nonconvex,start,start_nonconvex\n";
  const auto safe = [](auto fn) {
    try {
      return fn();
    } catch (const std::exception&) {
      return kNaN;
    }
  };
  for (std::size_t n : b.n_values) {
    for (double T : b.T_values) {
      const double sc = safe([&] { return bound_sgd_stability(b.L, b.G, b.mu, n, T, true); });
      const double sn = safe([&] { return bound_sgd_stability(b.L, b.G, b.mu, n, T, false); });
      const double st = b.etas.empty() ? kNaN : safe([&] {
        return bound_start_stability(b.G, b.gamma ? Gamma::finite(*b.gamma) : Gamma::infinite(), b.etas,
                                     b.stage_lengths, n);
      });
      const double snc = safe([&] { return bound_start_nonconvex_stability(b.L, b.G, b.mu, n, T, 0.0, b.c); });
      out << n << ',' << format_double(T) << ',' << format_double(sc) << ',' << format_double(sn) << ','
          << format_double(st) << ',' << format_double(snc) << '\n';
    }
  }
}

void generate_data(const ExperimentConfig& cfg, const std::string& path) {
  const DatasetSpec& d = cfg.dataset;
  json meta;
  meta["seed"] = d.seed;
  meta["d"] = d.d;
  meta["n"] = d.n;
  if (d.source == DataSource::quadratic) {
    const double noise = quadratic_noise(d);
    const QuadraticInstance inst = gen_quadratic(d.d, d.n, d.mu, d.L, noise, d.seed);
    std::ofstream out = open_out(path);
    write_libsvm(out, inst.least_squares);
    meta["generator"] = "quadratic";
    meta["mu"] = d.mu;
    meta["L"] = d.L;
    meta["noise"] = noise;
  } else if (d.source == DataSource::sparse_classification) {
    const Dataset ds = gen_sparse_classification(d.n, d.d, d.nnz, d.flip, d.seed);
    std::ofstream out = open_out(path);
    write_libsvm(out, ds);
    meta["generator"] = "sparse_classification";
    meta["nnz"] = d.nnz;
    meta["flip"] = d.flip;
  } else {
    throw ConfigError("dataset.source", "gen-data needs a generator source");
  }
  std::ofstream side = open_out(path + ".json");
  side << meta.dump(2) << '\n';
}

}  // namespace stagewise
