// stagewise: experiment driver. Every subcommand reads a JSON config; --seed and
// --out override the configured seeds and output directory.

#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "stagewise/config.hpp"
#include "stagewise/data_io.hpp"
#include "stagewise/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stagewise;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("config", c.config, "JSON experiment config")->required();
  sub->add_option("--seed", c.seed, "run with this single seed");
  sub->add_option("--out", c.out, "output directory");
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) cfg.seeds = {*c.seed};
  if (c.out) cfg.output = *c.out;
  return cfg;
}

json nan_to_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

int emit_error(const std::string& command, const std::string& kind, const std::string& message,
               const json& extra = json::object()) {
  json rec = {{"status", "error"}, {"command", command}, {"kind", kind}, {"message", message}};
  rec.update(extra);
  std::cerr << rec.dump() << '\n';
  return kind == "config" || kind == "parse" || kind == "usage" ? 2 : 1;
}

int cmd_compare(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const CompareResult res = run_compare(cfg);
  json files = res.files;
  std::cout << json{{"status", "ok"}, {"files", files}, {"aggregate", (fs::path(cfg.output) / "aggregate.csv").string()}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_sweep(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const SweepReport rep = run_scaling_sweep(cfg, cfg.sweep.mu_values);
  fs::create_directories(cfg.output);
  {
    std::ofstream out(fs::path(cfg.output) / "sweep.csv");
    write_sweep_csv(out, rep);
  }
  json points = json::array();
  for (const auto& pt : rep.points) {
    points.push_back({{"mu", pt.mu},
                      {"sgd_median", nan_to_null(pt.sgd_median)},
                      {"start_median", nan_to_null(pt.start_median)},
                      {"start_prescribed_median", pt.start_prescribed_median}});
  }
  const json summary = {{"status", "ok"},
                        {"sgd_slope", nan_to_null(rep.sgd_slope)},
                        {"start_slope", nan_to_null(rep.start_slope)},
                        {"start_prescribed_slope", nan_to_null(rep.start_prescribed_slope)},
                        {"points", points}};
  std::ofstream(fs::path(cfg.output) / "slopes.json") << summary.dump(2) << '\n';
  std::cout << summary.dump() << '\n';
  return 0;
}

int cmd_stability(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const auto rows = run_stability(cfg);
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"algorithm", r.algorithm},
                   {"mean_G_delta", r.summary.mean_G_delta},
                   {"bound", nan_to_null(r.bound)},
                   {"violations", r.summary.total_violations}});
  }
  std::cout << json{{"status", "ok"}, {"algorithms", out}}.dump() << '\n';
  return 0;
}

int cmd_diagnose(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const DiagnoseResult res = run_diagnose(cfg);
  const AssumptionReport& r = res.report;
  std::cout << json{{"status", "ok"},
                    {"f_star", res.reference.f_star},
                    {"theta_min", nan_to_null(r.theta_min)},
                    {"theta_median", nan_to_null(r.theta_median)},
                    {"mu_min", nan_to_null(r.mu_min)},
                    {"mu_median", nan_to_null(r.mu_median)},
                    {"rho_estimate", nan_to_null(r.rho_estimate)}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_bounds(const Common& c) {
  const ExperimentConfig cfg = load(c);
  write_bounds_table(std::cout, cfg.bounds);
  if (c.out) {
    fs::create_directories(cfg.output);
    std::ofstream out(fs::path(cfg.output) / "bounds.csv");
    write_bounds_table(out, cfg.bounds);
  }
  return 0;
}

int cmd_gen_data(const Common& c, const std::string& name) {
  ExperimentConfig cfg = load(c);
  if (c.seed) cfg.dataset.seed = *c.seed;
  const std::string path = (fs::path(cfg.output) / name).string();
  generate_data(cfg, path);
  std::cout << json{{"status", "ok"}, {"path", path}, {"metadata", path + ".json"}}.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stagewise regularized training and SGD experiments"};
  app.require_subcommand(1);
  Common common;
  std::string data_name = "dataset.libsvm";
  std::map<std::string, std::function<int()>> handlers{
      {"compare", [&] { return cmd_compare(common); }},
      {"sweep", [&] { return cmd_sweep(common); }},
      {"stability", [&] { return cmd_stability(common); }},
      {"diagnose", [&] { return cmd_diagnose(common); }},
      {"bounds", [&] { return cmd_bounds(common); }},
      {"gen-data", [&] { return cmd_gen_data(common, data_name); }},
  };
  const std::map<std::string, std::string> help{
      {"compare", "run every algorithm for every seed and write per-run and aggregate CSVs"},
      {"sweep", "iterations-to-target against 1/mu for SGD and START"},
      {"stability", "twin-trajectory stability trials against the closed-form bounds"},
      {"diagnose", "theta/mu ratios along a trajectory and Lanczos curvature probes"},
      {"bounds", "print the stability bound table"},
      {"gen-data", "write the configured synthetic dataset as libsvm"},
  };
  for (const auto& [name, text] : help) {
    CLI::App* sub = app.add_subcommand(name, text);
    add_common(sub, common);
    if (name == "gen-data") sub->add_option("--name", data_name, "file name inside the output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("", "usage", e.what());
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return handlers.at(command)();
  } catch (const ConfigError& e) {
    return emit_error(command, "config", e.what(), {{"field", e.field}});
  } catch (const ParseError& e) {
    return emit_error(command, "parse", e.what(), {{"line", e.line}});
  } catch (const DivergenceError& e) {
    return emit_error(command, "divergence", e.what(), {{"stage", e.stage}, {"iteration", e.iteration}});
  } catch (const std::invalid_argument& e) {
    return emit_error(command, "invalid_argument", e.what());
  } catch (const std::domain_error& e) {
    return emit_error(command, "domain", e.what());
  } catch (const std::exception& e) {
    return emit_error(command, "runtime", e.what());
  }
}
