#include "stagewise/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "stagewise/data_io.hpp"
#include "stagewise/parallel.hpp"

namespace stagewise {

TwinAlgorithm TwinAlgorithm::sgd(const StepSchedule& s, std::uint64_t T) {
  if (T < 1) throw std::invalid_argument("TwinAlgorithm::sgd: T must be >= 1");
  return {{TwinStage{s, T, Gamma::infinite()}}, ReturnOp::last};
}

TwinAlgorithm TwinAlgorithm::from_schedule(const StageSchedule& sched) {
  TwinAlgorithm a;
  a.return_op = sched.return_op;
  for (const auto& st : sched.stages) a.stages.push_back({StepSchedule::constant(st.eta), st.iterations, sched.gamma});
  return a;
}

const char* to_string(BoundBranch b) {
  switch (b) {
    case BoundBranch::same_sample: return "same_sample";
    case BoundBranch::differing_sample: return "differing_sample";
    case BoundBranch::skipped: return "skipped";
  }
  return "?";
}

StabilityTrace twin_run(const LossModel& m, const Dataset& ds, const FeasibleSet& set, std::size_t swap_index,
                        const SparseExample& replacement, const TwinAlgorithm& algo, const WeightVector& w0,
                        std::uint64_t seed) {
  if (algo.stages.empty()) throw std::invalid_argument("twin_run: algorithm has no stages");
  if (w0.size() != ds.dimension()) throw std::invalid_argument("twin_run: w0 dimension differs from the dataset");
  const Dataset other = make_neighbor(ds, swap_index, replacement);

  StabilityTrace trace;
  trace.swap_index = swap_index;
  RngStream rng{seed, 0};
  WeightVector w = w0;
  WeightVector v = w0;
  WeightVector g(w.size());
  WeightVector h(w.size());
  std::uint64_t cumulative = 0;

  for (std::size_t k = 1; k <= algo.stages.size(); ++k) {
    const TwinStage& st = algo.stages[k - 1];
    if (st.iterations < 1) throw std::invalid_argument("twin_run: stage lengths must be >= 1");
    const WeightVector anchor_w = w;
    const WeightVector anchor_v = v;
    const double delta_start = distance(w, v);
    double delta = delta_start;
    std::uint64_t tau = 0;
    if (algo.return_op == ReturnOp::random_iterate) tau = peek_index(rng, st.iterations, st.iterations) + 1;
    WeightVector pick_w;
    WeightVector pick_v;
    WeightVector avg_w;
    WeightVector avg_v;
    if (algo.return_op == ReturnOp::average) {
      avg_w = WeightVector(w.size());
      avg_v = WeightVector(w.size());
    }
    for (std::uint64_t t = 1; t <= st.iterations; ++t) {
      if (t == tau) {
        pick_w = w;
        pick_v = v;
      }
      const double eta = step_size(st.schedule, t);
      const std::size_t i = draw_index(rng, ds.size());
      ++cumulative;
      if (i == swap_index && !trace.first_hit) trace.first_hit = cumulative;
      try {
        std::fill(g.values().begin(), g.values().end(), 0.0);
        std::fill(h.values().begin(), h.values().end(), 0.0);
        add_loss_gradient(m, w, ds[i], 1.0, g);
        add_loss_gradient(m, v, other[i], 1.0, h);
        prox_step_inplace(set, w, anchor_w, g, eta, st.gamma);
        prox_step_inplace(set, v, anchor_v, h, eta, st.gamma);
      } catch (const NonFiniteError& e) {
        throw DivergenceError(k, t, e.what());
      }
      TraceStep step;
      step.stage = k;
      step.t = t;
      step.delta_prev = delta;
      delta = distance(w, v);
      step.delta = delta;
      step.delta_start = delta_start;
      step.same_sample = i != swap_index;
      step.eta = eta;
      step.gamma = st.gamma;
      trace.steps.push_back(step);
      if (algo.return_op == ReturnOp::average) {
        const double inv = 1.0 / static_cast<double>(t);
        for (std::size_t j = 0; j < w.size(); ++j) {
          avg_w[j] += (w[j] - avg_w[j]) * inv;
          avg_v[j] += (v[j] - avg_v[j]) * inv;
        }
      }
    }
    if (algo.return_op == ReturnOp::random_iterate) {
      draw_index(rng, st.iterations);
      w = std::move(pick_w);
      v = std::move(pick_v);
    } else if (algo.return_op == ReturnOp::average) {
      w = std::move(avg_w);
      v = std::move(avg_v);
    }
  }
  trace.final_delta = distance(w, v);
  trace.final_w = std::move(w);
  trace.final_w_prime = std::move(v);
  return trace;
}

double recurrence_bound(double delta_start, double delta_t, double eta, Gamma gamma, double L, double G,
                        bool same_sample, bool convex) {
  double pull = 0.0;
  double keep = 1.0;
  double kick = 2.0 * eta * G;
  if (!gamma.is_infinite()) {
    const double gm = gamma.value();
    pull = eta / (eta + gm);
    keep = gm / (eta + gm);
    kick = 2.0 * eta * gm * G / (eta + gm);
  }
  if (!same_sample) return pull * delta_start + keep * delta_t + kick;
  if (convex) return pull * delta_start + keep * delta_t;
  return pull * delta_start + keep * (1.0 + eta * L) * delta_t;
}

std::vector<Violation> check_recurrence(StabilityTrace& trace, double L, double G, bool convex) {
  std::vector<Violation> out;
  for (auto& s : trace.steps) {
    s.violation = false;
    if (convex && s.eta > 2.0 / L) {
      s.branch = BoundBranch::skipped;
      s.bound = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    s.branch = s.same_sample ? BoundBranch::same_sample : BoundBranch::differing_sample;
    s.bound = recurrence_bound(s.delta_start, s.delta_prev, s.eta, s.gamma, L, G, s.same_sample, convex);
    if (s.delta > s.bound + kRecurrenceSlack) {
      s.violation = true;
      out.push_back({s.stage, s.t, s.delta, s.bound});
    }
  }
  trace.recurrence_violations = out;
  return out;
}

void write_trace_csv(std::ostream& out, const StabilityTrace& trace) {
  out << "stage,t,delta,same_sample,bound_branch,bound_value,violation\n";
  for (const auto& s : trace.steps) {
    out << s.stage << ',' << s.t << ',' << format_double(s.delta) << ',' << (s.same_sample ? 1 : 0) << ','
        << to_string(s.branch) << ',' << format_double(s.bound) << ',' << (s.violation ? 1 : 0) << '\n';
  }
}

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be finite and > 0");
}

}  // namespace

double bound_sgd_stability(double L, double G, double mu, std::size_t n, double T, bool convex) {
  require_positive(L, "L");
  require_positive(G, "G");
  require_positive(mu, "mu");
  if (!(T >= 0.0)) throw std::invalid_argument("T must be >= 0");
  const double nd = static_cast<double>(n);
  if (convex) {
    if (!(nd > L / mu)) throw std::domain_error("convex SGD stability bound needs n > L/mu");
    return (L + 2.0 * G * G * std::log(T + 1.0)) / (nd * mu);
  }
  if (n < 2) throw std::domain_error("non-convex SGD stability bound needs n >= 2");
  const double r = L / mu;
  return ((1.0 + mu / L) / (nd - 1.0)) * std::pow(2.0 * G * G / mu, 1.0 / (r + 1.0)) * std::pow(T, r / (r + 1.0));
}

double bound_start_stability(double G, Gamma gamma, const std::vector<double>& etas,
                             const std::vector<std::uint64_t>& Ts, std::size_t n) {
  if (etas.size() != Ts.size()) throw std::invalid_argument("bound_start_stability: eta and T lists differ in length");
  if (n < 1) throw std::invalid_argument("bound_start_stability: n must be >= 1");
  require_positive(G, "G");
  double sum = 0.0;
  for (std::size_t k = 0; k < etas.size(); ++k) {
    require_positive(etas[k], "eta_k");
    const double T = static_cast<double>(Ts[k]);
    if (gamma.is_infinite()) {
      sum += etas[k] * T;
    } else {
      const double gm = gamma.value();
      sum += 1.0 - std::pow(gm / (etas[k] + gm), T);
    }
  }
  const double scale = gamma.is_infinite() ? 2.0 * G * G : 2.0 * gamma.value() * G * G;
  return scale * sum / static_cast<double>(n);
}

double bound_start_nonconvex_stability(double L, double G, double mu, std::size_t n, double T_k, double S_prev,
                                       double c) {
  require_positive(L, "L");
  require_positive(G, "G");
  require_positive(mu, "mu");
  require_positive(c, "c");
  if (n < 2) throw std::invalid_argument("non-convex START bound needs n >= 2");
  if (!(T_k >= 0.0) || !(S_prev >= 0.0)) throw std::invalid_argument("T_k and S_prev must be >= 0");
  const double nd = static_cast<double>(n);
  const double r = L * c / mu;
  return S_prev / nd +
         ((1.0 + mu / (L * c)) / (nd - 1.0)) * std::pow(2.0 * G * G * c / mu, 1.0 / (1.0 + r)) *
             std::pow(T_k, r / (r + 1.0));
}

ErrorDecomposition decompose_error(const LossModel& m, const WeightVector& w, const Dataset& train,
                                   const Dataset& test, const ReferenceSolution& ref) {
  ErrorDecomposition e;
  e.train_error = empirical_risk(m, w, train);
  e.test_error = empirical_risk(m, w, test);
  e.generalization_gap = e.test_error - e.train_error;
  e.opt_gap = e.train_error - ref.f_star;
  return e;
}

StabilitySummary stability_experiment(const LossModel& m, const Dataset& ds, const Dataset& pool,
                                      const FeasibleSet& set, const TwinAlgorithm& algo, const WeightVector& w0,
                                      std::size_t trials, std::uint64_t base_seed, bool convex) {
  if (trials < 1) throw std::invalid_argument("stability_experiment: trials must be >= 1");
  if (pool.dimension() != ds.dimension()) throw std::invalid_argument("stability_experiment: pool dimension differs");
  StabilitySummary sum;
  sum.trials = parallel_map(trials, [&](std::size_t trial) {
    const std::uint64_t seed = mix64(base_seed, trial);
    RngStream pick{mix64(seed, 0x5A9ULL), 0};
    const std::size_t swap = draw_index(pick, ds.size());
    const SparseExample& repl = pool[draw_index(pick, pool.size())];
    StabilityTrace tr = twin_run(m, ds, set, swap, repl, algo, w0, seed);
    const auto violations = check_recurrence(tr, m.smoothness(), m.lipschitz(), convex);
    StabilityTrial out;
    out.seed = seed;
    out.swap_index = swap;
    out.final_delta = tr.final_delta;
    out.violations = violations.size();
    out.checked_steps = static_cast<std::size_t>(
        std::count_if(tr.steps.begin(), tr.steps.end(), [](const TraceStep& s) { return s.branch != BoundBranch::skipped; }));
    double change = 0.0;
    const auto probe = [&](const SparseExample& z) {
      change = std::max(change, std::abs(loss_value(m, tr.final_w, z) - loss_value(m, tr.final_w_prime, z)));
    };
    for (const auto& z : pool.examples()) probe(z);
    probe(ds[swap]);
    probe(repl);
    out.loss_change = change;
    return out;
  });
  for (const auto& t : sum.trials) {
    sum.mean_G_delta += m.lipschitz() * t.final_delta;
    sum.mean_loss_change += t.loss_change;
    sum.total_steps += t.checked_steps;
    sum.total_violations += t.violations;
  }
  sum.mean_G_delta /= static_cast<double>(trials);
  sum.mean_loss_change /= static_cast<double>(trials);
  return sum;
}

}  // namespace stagewise
