#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "stagewise/data_io.hpp"
#include "stagewise/optim.hpp"

using namespace stagewise;

namespace {

struct Quad {
  QuadraticInstance inst;
  LossModel model;
};

Quad make_quad(double mu, std::uint64_t seed, double noise = 0.05, std::size_t d = 20, std::size_t n = 400) {
  QuadraticInstance inst = gen_quadratic(d, n, mu, 1.0, noise, seed);
  LossModel m = LossModel::quadratic(inst.problem, inst.noise, FeasibleSet::unconstrained());
  return {std::move(inst), std::move(m)};
}

Dataset classification(std::uint64_t seed) { return gen_sparse_classification(200, 30, 5, 0.05, seed); }

bool same_run(const RunRecord& a, const RunRecord& b) {
  if (!(a.final_w == b.final_w) || a.log.size() != b.log.size() || a.stages.size() != b.stages.size()) return false;
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    if (a.log[i].cumulative != b.log[i].cumulative || a.log[i].train_error != b.log[i].train_error) return false;
  }
  for (std::size_t i = 0; i < a.stages.size(); ++i) {
    if (!(a.stages[i].output == b.stages[i].output)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("step size schedules") {
  CHECK(step_size(StepSchedule::one_over_t(1.0), 1) == 0.375);
  CHECK(step_size(StepSchedule::constant(0.01), 1) == 0.01);
  CHECK(step_size(StepSchedule::constant(0.01), 123456) == 0.01);
  CHECK(step_size(StepSchedule::inv_sqrt(1.0), 4) == 0.5);
  CHECK_THROWS_AS(step_size(StepSchedule::constant(0.1), 0), std::invalid_argument);
  const StepSchedule pw = StepSchedule::piecewise({2, 3}, {1.0, 0.5});
  CHECK(step_size(pw, 1) == 1.0);
  CHECK(step_size(pw, 2) == 1.0);
  CHECK(step_size(pw, 3) == 0.5);
  CHECK(step_size(pw, 5) == 0.5);
  CHECK(step_size(pw, 100) == 0.5);
  CHECK_THROWS_AS(StepSchedule::one_over_t(0.0), std::invalid_argument);
  CHECK_THROWS_AS(StepSchedule::piecewise({1}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("convex stage schedule formulas") {
  RegimeInputs in;
  in.eps0 = 1.0;
  in.target_eps = 0.125;
  in.mu = 0.1;
  in.L = 1.0;
  in.sigma2 = 1.0;
  in.alpha = 1.0;
  const StageSchedule s = make_stage_schedule(Regime::convex, in);
  REQUIRE(s.K() == 3);
  CHECK(s.stages[0].epsilon == 0.5);
  CHECK(s.stages[0].iterations == 90);
  CHECK(s.stages[0].eta == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  CHECK(s.gamma.value() >= 15.0);
  CHECK(s.return_op == ReturnOp::average);
  // sum T_k = (9 sigma^2 / (mu alpha)) (2^K - 1) / eps0
  CHECK(s.total_iterations() == 630);
  for (const auto& st : s.stages) CHECK(st.eta * static_cast<double>(st.iterations) == doctest::Approx(15.0).epsilon(1e-15));
  CHECK_THROWS_AS(make_stage_schedule(Regime::convex, [&] {
                    RegimeInputs b = in;
                    b.gamma = 10.0;
                    return b;
                  }()),
                  std::invalid_argument);
}

TEST_CASE("eta_k T_k is the regime constant") {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    RegimeInputs in;
    in.eps0 = 0.1 + 10 * u(gen);
    in.target_eps = in.eps0 * (0.001 + 0.5 * u(gen));
    in.mu = std::pow(10.0, -3 * u(gen));
    in.L = std::max(in.mu, 5 * u(gen));
    in.sigma2 = 0.01 + u(gen);
    in.G = 0.5 + u(gen);
    in.theta = 0.5 + u(gen);
    for (Regime r : {Regime::convex, Regime::quasi_convex, Regime::weakly_convex}) {
      const StageSchedule s = make_stage_schedule(r, in);
      CHECK(s.K() == static_cast<std::size_t>(std::ceil(std::log2(in.eps0 / in.target_eps) - 1e-9)));
      const double C = regime_budget_constant(r, in.mu, in.theta);
      for (const auto& st : s.stages) {
        CHECK(st.eta * static_cast<double>(st.iterations) == doctest::Approx(C).epsilon(1e-14));
        CHECK(st.eta <= 1.0 / in.L * (1 + 1e-12));
      }
    }
  }
  CHECK(regime_budget_constant(Regime::convex, 0.1, 1.0) == doctest::Approx(15.0));
  CHECK(regime_budget_constant(Regime::quasi_convex, 0.1, 2.0) == doctest::Approx(7.5));
  CHECK(regime_budget_constant(Regime::weakly_convex, 0.1, 1.0) == doctest::Approx(10.0));
}

TEST_CASE("regime specifics") {
  RegimeInputs in;
  in.eps0 = 1.0;
  in.target_eps = 0.25;
  in.mu = 0.5;
  in.L = 1.0;
  in.sigma2 = 0.5;
  in.G = 1.0;
  in.theta = 2.0;
  const StageSchedule q = make_stage_schedule(Regime::quasi_convex, in);
  CHECK(q.return_op == ReturnOp::random_iterate);
  CHECK(q.gamma.value() == doctest::Approx(1.5));
  // T = 9 G^2 / (4 mu eps theta^2) at eps = 0.5: 9 / 4 = 2.25 -> 3
  CHECK(q.stages[0].iterations == 3);
  const StageSchedule w = make_stage_schedule(Regime::weakly_convex, in);
  CHECK(w.gamma.value() == doctest::Approx(8.0));
  CHECK(w.alpha == doctest::Approx(1.0));
  // T = 4 sigma^2 / (mu eps alpha) = 4 * 0.5 / (0.5 * 0.5) = 8
  CHECK(w.stages[0].iterations == 8);
  in.target_eps = 2.0;
  CHECK_THROWS_AS(make_stage_schedule(Regime::convex, in), std::invalid_argument);
}

TEST_CASE("constant-step SGD on a noiseless 1-d quadratic contracts geometrically") {
  const double mu = 0.3, eta = 1.2;
  auto p = std::make_shared<QuadraticProblem>(std::vector<double>{mu}, WeightVector{0.0}, 0);
  const Dataset noise({SparseExample{0.0, {}}}, 1);
  const LossModel m = LossModel::quadratic(p, noise, FeasibleSet::unconstrained());
  RngStream rng{1, 0};
  const WeightVector w0{2.0};
  const RunRecord r = sgd_run(m, noise, FeasibleSet::unconstrained(), StepSchedule::constant(eta), w0, 25, rng);
  CHECK(r.final_w[0] == doctest::Approx(std::pow(1 - eta * mu, 25) * 2.0).epsilon(1e-12));
  CHECK(r.total_iterations == 25);

  RngStream one{1, 0};
  const RunRecord r1 = sgd_run(m, noise, FeasibleSet::unconstrained(), StepSchedule::constant(eta), w0, 1, one);
  CHECK(r1.final_w[0] == doctest::Approx(2.0 * (1 - eta * mu)).epsilon(1e-15));
  CHECK(one.counter == 1);
  RngStream zero{1, 0};
  CHECK_THROWS_AS(sgd_run(m, noise, FeasibleSet::unconstrained(), StepSchedule::constant(eta), w0, 0, zero),
                  std::invalid_argument);
}

TEST_CASE("START with infinite gamma and last return is piecewise-constant SGD") {
  const Dataset ds = classification(3);
  const FeasibleSet set = FeasibleSet::l1_ball(3.0);
  const LossModel m = LossModel::linear(LossKind::squared_hinge, ds, set);
  const std::vector<std::uint64_t> lengths{50, 70, 30, 200};
  const StageSchedule sched = practical_schedule(Variant::V1, lengths, 0.4, 0.5, Gamma::infinite());
  RngStream a{77, 0}, b{77, 0};
  const WeightVector w0(ds.dimension());
  const RunRecord st = start_run(m, ds, set, sched, w0, a);
  const RunRecord sg = sgd_run(m, ds, set, StepSchedule::piecewise(lengths, sched.etas()), w0, 350, b);
  CHECK(st.final_w == sg.final_w);
  CHECK(a == b);
}

TEST_CASE("V2 with infinite gamma is V1") {
  const Dataset ds = classification(4);
  const FeasibleSet set = FeasibleSet::unconstrained();
  const LossModel m = LossModel::linear(LossKind::logistic, ds, set);
  const WeightVector w0(ds.dimension());
  RngStream a{5, 0}, b{5, 0};
  const RunRecord v1 = variant_run(m, ds, set, Variant::V1, {100, 100, 100}, 1.0, 0.5, Gamma::finite(3.0), w0, a);
  const RunRecord v2 = variant_run(m, ds, set, Variant::V2, {100, 100, 100}, 1.0, 0.5, Gamma::infinite(), w0, b);
  CHECK(same_run(v1, v2));
  // A single V1 stage is constant-step SGD.
  RngStream c{6, 0}, d{6, 0};
  const RunRecord one = variant_run(m, ds, set, Variant::V1, {250}, 0.3, 0.5, Gamma::infinite(), w0, c);
  const RunRecord sgd = sgd_run(m, ds, set, StepSchedule::constant(0.3), w0, 250, d);
  CHECK(one.final_w == sgd.final_w);
}

TEST_CASE("runs are deterministic") {
  const Dataset ds = classification(5);
  const FeasibleSet set = FeasibleSet::l2_ball(2.0);
  const LossModel m = LossModel::linear(LossKind::huber, ds, set);
  const WeightVector w0(ds.dimension());
  RunOptions opt;
  opt.eval_every = 37;
  RngStream a{9, 0}, b{9, 0};
  const RunRecord r1 = variant_run(m, ds, set, Variant::V3, {100, 200}, 0.5, 0.5, Gamma::finite(2.0), w0, a, opt);
  const RunRecord r2 = variant_run(m, ds, set, Variant::V3, {100, 200}, 0.5, 0.5, Gamma::finite(2.0), w0, b, opt);
  CHECK(same_run(r1, r2));
}

TEST_CASE("evaluation cadence gives ceil(T / every) + 1 rows") {
  const Dataset ds = classification(6);
  const LossModel m = LossModel::linear(LossKind::logistic, ds, FeasibleSet::unconstrained());
  const WeightVector w0(ds.dimension());
  for (std::uint64_t T : {1ULL, 10ULL, 99ULL, 100ULL, 101ULL}) {
    for (std::uint64_t every : {1ULL, 3ULL, 10ULL, 200ULL}) {
      RunOptions opt;
      opt.eval_every = every;
      RngStream rng{1, 0};
      const RunRecord r = sgd_run(m, ds, FeasibleSet::unconstrained(), StepSchedule::constant(0.1), w0, T, rng, opt);
      CHECK(r.log.size() == (T + every - 1) / every + 1);
      CHECK(r.log.front().cumulative == 0);
      CHECK(r.log.back().cumulative == T);
    }
  }
}

TEST_CASE("divergence names the stage and iteration") {
  const Dataset ds = classification(7);
  const LossModel m = LossModel::linear(LossKind::square, ds, FeasibleSet::unconstrained());
  RngStream rng{1, 0};
  try {
    sgd_run(m, ds, FeasibleSet::unconstrained(), StepSchedule::constant(1e6), WeightVector(ds.dimension()), 100000,
            rng);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.stage == 1);
    CHECK(e.iteration >= 1);
  }
}

TEST_CASE("START stage errors shrink on a quadratic") {
  const Quad q = make_quad(0.05, 17);
  const double eps0 = RiskEvaluator(q.model, q.inst.noise)(WeightVector(20));
  RegimeInputs in;
  in.eps0 = eps0;
  in.target_eps = eps0 / 16;
  in.mu = 0.05;
  in.L = 1.0;
  in.sigma2 = q.model.variance();
  const StageSchedule s = make_stage_schedule(Regime::convex, in);
  std::vector<std::vector<double>> errs(s.K());
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    RngStream rng{seed, 0};
    const RunRecord r = start_run(q.model, q.inst.noise, FeasibleSet::unconstrained(), s, WeightVector(20), rng);
    CHECK(r.total_iterations == s.total_iterations());
    for (std::size_t k = 0; k < s.K(); ++k) errs[k].push_back(r.stages[k].output_train_error);
  }
  double prev = eps0;
  for (auto& e : errs) {
    std::sort(e.begin(), e.end());
    const double med = e[e.size() / 2];
    CHECK(med <= prev);
    prev = med;
  }
}

TEST_CASE("random-iterate return picks a visited iterate") {
  const Dataset ds = classification(8);
  const LossModel m = LossModel::linear(LossKind::logistic, ds, FeasibleSet::unconstrained());
  RegimeInputs in;
  in.eps0 = 1.0;
  in.target_eps = 0.5;
  in.mu = 2.0;
  in.L = m.smoothness();
  in.G = 0.3;
  in.theta = 1.0;
  const StageSchedule s = make_stage_schedule(Regime::quasi_convex, in);
  REQUIRE(s.K() == 1);
  std::vector<WeightVector> seen{WeightVector(ds.dimension())};
  RunOptions opt;
  opt.eval_every = 1;
  opt.on_eval = [&](std::uint64_t, const WeightVector& w) { seen.push_back(w); };
  RngStream rng{3, 0};
  const RunRecord r = start_run(m, ds, FeasibleSet::unconstrained(), s, WeightVector(ds.dimension()), rng, opt);
  CHECK(std::find(seen.begin(), seen.end(), r.stages[0].output) != seen.end());
  CHECK(rng.counter == s.total_iterations() + 1);
}

TEST_CASE("stop_below ends SGD at the first evaluation under the target") {
  const Quad q = make_quad(0.1, 19, 0.0);
  RunOptions opt;
  opt.eval_every = 1;
  opt.stop_below = 1e-3;
  RngStream rng{1, 0};
  const RunRecord r = sgd_run(q.model, q.inst.noise, FeasibleSet::unconstrained(), StepSchedule::constant(0.5),
                              WeightVector(20), 100000, rng, opt);
  REQUIRE(r.reached_at.has_value());
  CHECK(r.log.back().train_error <= 1e-3);
  CHECK(r.log[r.log.size() - 2].train_error > 1e-3);
  CHECK(*r.reached_at == r.total_iterations);
}

TEST_CASE("validation stages") {
  const Dataset ds = classification(9);
  const FeasibleSet set = FeasibleSet::l1_ball(5.0);
  const LossModel m = LossModel::linear(LossKind::squared_hinge, ds, set);
  const WeightVector w0(ds.dimension());

  SUBCASE("threshold 0 never ends a stage early") {
    ValidationRule rule;
    rule.window = 50;
    rule.threshold = 0.0;
    rule.max_stage_length = 300;
    rule.eta0 = 0.5;
    rule.budget = 1000;
    RngStream rng{1, 0};
    const RunRecord r = validation_stagewise_run(m, ds, ds, set, rule, w0, rng);
    REQUIRE(r.stages.size() == 4);
    CHECK(r.stages[0].iterations == 300);
    CHECK(r.stages[1].iterations == 300);
    CHECK(r.stages[2].iterations == 300);
    CHECK(r.stages[3].iterations == 100);
    CHECK(r.stages[1].eta == doctest::Approx(0.25));
  }
  SUBCASE("a constant metric ends each stage at the window") {
    // All-zero features: every margin is 0, so the error rate stays 1.
    const Dataset flat({SparseExample{1.0, {}}, SparseExample{-1.0, {}}}, ds.dimension());
    ValidationRule rule;
    rule.window = 40;
    rule.threshold = 0.01;
    rule.eta0 = 0.5;
    rule.budget = 200;
    RngStream rng{1, 0};
    const RunRecord r = validation_stagewise_run(m, ds, flat, set, rule, w0, rng);
    REQUIRE(r.stages.size() == 5);
    for (const auto& st : r.stages) CHECK(st.iterations == 40);
  }
  SUBCASE("random iterate is rejected") {
    ValidationRule rule;
    rule.eta0 = 0.1;
    rule.budget = 10;
    rule.return_op = ReturnOp::random_iterate;
    RngStream rng{1, 0};
    CHECK_THROWS_AS(validation_stagewise_run(m, ds, ds, set, rule, w0, rng), std::invalid_argument);
  }
}

TEST_CASE("error metrics") {
  const Dataset ds({SparseExample{1.0, {{0, 1.0}}}, SparseExample{-1.0, {{0, 1.0}}}, SparseExample{1.0, {}}}, 1);
  CHECK(error_rate({1.0}, ds) == doctest::Approx(2.0 / 3.0));
  CHECK(rmse({1.0}, ds) == doctest::Approx(std::sqrt((0.0 + 4.0 + 1.0) / 3.0)));
}

TEST_CASE("enum names round-trip") {
  for (auto k : {ScheduleKind::poly_one_over_t, ScheduleKind::poly_inv_sqrt, ScheduleKind::constant,
                 ScheduleKind::piecewise_constant}) {
    CHECK(parse_schedule_kind(to_string(k)) == k);
  }
  for (auto r : {Regime::convex, Regime::quasi_convex, Regime::weakly_convex, Regime::practical}) {
    CHECK(parse_regime(to_string(r)) == r);
  }
  for (auto v : {Variant::V1, Variant::V2, Variant::V3}) CHECK(parse_variant(to_string(v)) == v);
  for (auto o : {ReturnOp::last, ReturnOp::average, ReturnOp::random_iterate}) CHECK(parse_return_op(to_string(o)) == o);
  CHECK_THROWS_AS(parse_variant("V4"), std::invalid_argument);
}
