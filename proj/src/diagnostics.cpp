#include "stagewise/diagnostics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "stagewise/data_io.hpp"
#include "stagewise/optim.hpp"

namespace stagewise {

using nlohmann::json;

std::string serialize_reference(const ReferenceSolution& ref) {
  json j;
  j["w_star"] = ref.w_star.data();
  j["f_star"] = ref.f_star;
  j["provenance"] = ref.provenance;
  return j.dump();
}

ReferenceSolution parse_reference(const std::string& text) {
  const json j = json::parse(text);
  ReferenceSolution ref;
  ref.w_star = WeightVector(j.at("w_star").get<std::vector<double>>());
  ref.f_star = j.at("f_star").get<double>();
  ref.provenance = j.at("provenance").get<std::string>();
  return ref;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace

double theta_ratio(const LossModel& m, const Dataset& ds, const WeightVector& w, const ReferenceSolution& ref) {
  const double gap = empirical_risk(m, w, ds) - ref.f_star;
  if (!(gap > kRatioFloor)) throw BelowFloorError("theta_ratio: optimality gap below floor");
  return dot(full_gradient(m, w, ds), subtract(w, ref.w_star)) / gap;
}

double mu_ratio(const LossModel& m, const Dataset& ds, const WeightVector& w, const ReferenceSolution& ref) {
  const double dist2 = squared_distance(w, ref.w_star);
  if (!(std::sqrt(dist2) > kRatioFloor)) throw BelowFloorError("mu_ratio: distance to reference below floor");
  return (empirical_risk(m, w, ds) - ref.f_star) / (2.0 * dist2);
}

WeightVector hessian_vector_product(const LossModel& m, const Dataset& ds, const WeightVector& w,
                                    const WeightVector& v) {
  require_same_size(w, v, "hessian_vector_product");
  const double vn = norm(v);
  if (!(vn > 0.0)) throw std::invalid_argument("hessian_vector_product: v must be nonzero");
  const double h = std::sqrt(std::numeric_limits<double>::epsilon()) * (1.0 + norm(w)) / vn;
  WeightVector plus = w;
  WeightVector minus = w;
  axpy(h, v, plus);
  axpy(-h, v, minus);
  WeightVector out = subtract(full_gradient(m, plus, ds), full_gradient(m, minus, ds));
  out = scale(out, 1.0 / (2.0 * h));
  out.require_finite("hessian_vector_product");
  return out;
}

LanczosResult lanczos_min_eig(const LinearOperator& op, std::size_t d, std::size_t iters, RngStream rng) {
  if (iters < 2) throw std::invalid_argument("lanczos_min_eig: iters must be >= 2");
  if (d < 1) throw std::invalid_argument("lanczos_min_eig: dimension must be >= 1");
  std::vector<WeightVector> basis;
  std::vector<double> alpha;
  std::vector<double> beta;
  WeightVector q(d);
  for (std::size_t i = 0; i < d; ++i) q[i] = draw_normal(rng);
  q = scale(q, 1.0 / norm(q));

  LanczosResult res;
  double scale_est = 0.0;
  for (std::size_t j = 0; j < iters; ++j) {
    basis.push_back(q);
    WeightVector r = op(q);
    if (r.size() != d) throw std::invalid_argument("lanczos_min_eig: operator changed the dimension");
    const double a = dot(q, r);
    alpha.push_back(a);
    // Two passes of classical Gram-Schmidt against the whole basis.
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) axpy(-dot(b, r), b, r);
    }
    const double bnorm = norm(r);
    scale_est = std::max({scale_est, std::abs(a), bnorm});
    if (j + 1 == iters) break;
    if (bnorm <= 1e-12 * std::max(1.0, scale_est) || basis.size() == d) {
      res.breakdown = true;
      break;
    }
    beta.push_back(bnorm);
    q = scale(r, 1.0 / bnorm);
  }

  const auto k = static_cast<Eigen::Index>(alpha.size());
  Eigen::VectorXd diag(k);
  Eigen::VectorXd sub(std::max<Eigen::Index>(k - 1, 0));
  for (Eigen::Index i = 0; i < k; ++i) diag[i] = alpha[static_cast<std::size_t>(i)];
  for (Eigen::Index i = 0; i + 1 < k; ++i) sub[i] = beta[static_cast<std::size_t>(i)];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& ev = es.eigenvalues();
  res.ritz_values.assign(ev.data(), ev.data() + ev.size());
  res.min_eig = ev.minCoeff();
  res.iterations = alpha.size();
  return res;
}

LanczosResult lanczos_min_eig(const LossModel& m, const Dataset& ds, const WeightVector& w, std::size_t iters,
                              RngStream rng) {
  const LinearOperator op = [&](const WeightVector& v) { return hessian_vector_product(m, ds, w, v); };
  return lanczos_min_eig(op, w.size(), iters, rng);
}

ReferenceSolution compute_reference(const LossModel& m, const Dataset& ds, const FeasibleSet& set,
                                    std::uint64_t budget, RngStream rng, std::optional<WeightVector> w0) {
  if (budget < 1) throw std::invalid_argument("compute_reference: budget must be >= 1");
  WeightVector start = w0 ? project(set, *w0) : WeightVector(ds.dimension());
  const std::uint64_t stages = std::min<std::uint64_t>(20, budget);
  std::vector<std::uint64_t> lengths(stages, budget / stages);
  lengths.back() += budget % stages;
  const double eta0 = 1.0 / m.smoothness();
  const std::uint64_t seed = rng.seed;
  RunOptions opt;
  opt.record_log = false;
  const RunRecord rec = variant_run(m, ds, set, Variant::V1, lengths, eta0, 0.5, Gamma::infinite(), start, rng, opt);

  ReferenceSolution best{start, empirical_risk(m, start, ds), ""};
  for (const auto& st : rec.stages) {
    if (st.output_train_error < best.f_star) {
      best.w_star = st.output;
      best.f_star = st.output_train_error;
    }
  }
  std::ostringstream prov;
  prov << "V1 stages=" << stages << " budget=" << budget << " eta0=" << format_double(eta0)
       << " decay=0.5 seed=" << seed;
  best.provenance = prov.str();
  return best;
}

ReferenceSolution cached_reference(const LossModel& m, const Dataset& ds, const FeasibleSet& set,
                                   std::uint64_t budget, RngStream rng, const std::string& cache_dir) {
  namespace fs = std::filesystem;
  std::string key = "ref_" + hash_hex(dataset_hash(ds)) + "_" + to_string(m.kind()) + "_" + to_string(set.kind);
  if (set.bounded()) key += "_" + format_double(set.radius);
  const fs::path path = fs::path(cache_dir) / (key + ".json");
  if (fs::exists(path)) {
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    ReferenceSolution ref = parse_reference(buf.str());
    if (ref.w_star.size() == ds.dimension()) return ref;
  }
  ReferenceSolution ref = compute_reference(m, ds, set, budget, rng);
  fs::create_directories(cache_dir);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write reference cache '" + path.string() + "'");
  out << serialize_reference(ref) << '\n';
  return ref;
}

std::vector<Probe> select_probes(const std::vector<Probe>& trajectory, std::size_t count) {
  if (count == 0 || trajectory.size() <= count) return trajectory;
  std::vector<Probe> out;
  out.reserve(count);
  const double span = static_cast<double>(trajectory.size() - 1);
  for (std::size_t i = 0; i < count; ++i) {
    const double pos = count == 1 ? span : span * static_cast<double>(i) / static_cast<double>(count - 1);
    out.push_back(trajectory[static_cast<std::size_t>(std::llround(pos))]);
  }
  return out;
}

AssumptionReport assess_assumptions(const LossModel& m, const Dataset& ds, const std::vector<Probe>& probes,
                                    const ReferenceSolution& ref, std::size_t lanczos_probes,
                                    std::size_t lanczos_iters, RngStream rng) {
  AssumptionReport rep;
  std::vector<double> thetas;
  std::vector<double> mus;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const WeightVector& w = probes[i].w;
    ProbeResult p;
    p.probe_index = i;
    p.cumulative = probes[i].cumulative;
    const double f = empirical_risk(m, w, ds);
    if (f < ref.f_star - 1e-12) {
      throw std::domain_error("reference solution rejected: probe " + std::to_string(i) + " has lower risk " +
                              format_double(f) + " than f_star " + format_double(ref.f_star));
    }
    p.f_gap = f - ref.f_star;
    p.distance_sq = squared_distance(w, ref.w_star);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    p.theta = nan;
    p.mu = nan;
    if (p.f_gap > kRatioFloor && std::sqrt(p.distance_sq) > kRatioFloor) {
      p.theta = dot(full_gradient(m, w, ds), subtract(w, ref.w_star)) / p.f_gap;
      p.mu = p.f_gap / (2.0 * p.distance_sq);
      thetas.push_back(p.theta);
      mus.push_back(p.mu);
    } else {
      p.below_floor = true;
    }
    rep.probes.push_back(p);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rep.theta_min = thetas.empty() ? nan : *std::min_element(thetas.begin(), thetas.end());
  rep.mu_min = mus.empty() ? nan : *std::min_element(mus.begin(), mus.end());
  rep.theta_median = median(thetas);
  rep.mu_median = median(mus);

  if (lanczos_probes > 0 && !probes.empty()) {
    const std::size_t count = std::min(lanczos_probes, probes.size());
    double min_eig = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t idx =
          count == 1 ? probes.size() - 1 : (probes.size() - 1) * c / (count - 1);
      const std::size_t iters = std::min(lanczos_iters, ds.dimension() < 2 ? std::size_t{2} : ds.dimension());
      LanczosResult r = lanczos_min_eig(m, ds, probes[idx].w, std::max<std::size_t>(iters, 2),
                                        RngStream{mix64(rng.seed, idx), rng.counter});
      min_eig = std::min(min_eig, r.min_eig);
      rep.lanczos.push_back({idx, std::move(r)});
    }
    rep.rho_estimate = std::max(0.0, -min_eig);
  }
  return rep;
}

void write_probe_csv(std::ostream& out, const AssumptionReport& report) {
  out << "probe_index,cumulative_iteration,theta,mu,f_gap,distance_sq\n";
  for (const auto& p : report.probes) {
    out << p.probe_index << ',' << p.cumulative << ',' << format_double(p.theta) << ',' << format_double(p.mu) << ','
        << format_double(p.f_gap) << ',' << format_double(p.distance_sq) << '\n';
  }
}

void write_lanczos_csv(std::ostream& out, const AssumptionReport& report) {
  out << "probe_index,min_eig,iters,breakdown_flag\n";
  for (const auto& l : report.lanczos) {
    out << l.probe_index << ',' << format_double(l.result.min_eig) << ',' << l.result.iterations << ','
        << (l.result.breakdown ? 1 : 0) << '\n';
  }
}

}  // namespace stagewise
