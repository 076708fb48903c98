#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "gtl/bounds.hpp"
#include "gtl/nlp_solver.hpp"
#include "test_helpers.hpp"

using namespace gtl;
using namespace gtl::testing;

namespace {

const TaskSpace kUnit(Vec::Zero(1), Vec::Ones(1));
const TaskSpace kDi(Vec::Constant(1, 0.5), Vec::Constant(1, 1.5));

TrajectoryMap affine_map(double a, double b, double c, int L = 8) {
  return [=](const Task& t) {
    Prediction p;
    p.states = Mat::Constant(L, 2, b);
    p.states.col(0).array() += a * t[0];
    p.states.col(1).array() += 0.5 * a * t[0];
    p.duration = 1.0 + c * t[0];
    return p;
  };
}

// Smooth double-integrator network trained on a handful of solved tasks; shared across tests.
const ApproximatorWeights& trained_di_weights() {
  static const ApproximatorWeights w = [] {
    const SystemSpec spec = double_integrator_spec(kDi);
    const TaskSet ts = sample_uniform(kDi, 30, 1);
    const int L = 16;
    std::vector<RegressionTarget> tg;
    const auto reps = solve_original_batch(spec, ts, L, SolverConfig{});
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const Trajectory tr = transcribe(spec, ts[i], L).unpack(reps[i].solution);
      tg.push_back({tr.states, tr.duration});
    }
    NetConfig c;
    c.n_hidden = 1;
    c.hidden_size = 16;
    c.n_upsample = 3;
    c.kernel_len = 3;
    c.seq_len = L;
    c.input_center = Vec::Constant(1, 1.0);
    c.input_scale = Vec::Constant(1, 0.5);
    TrainConfig tc;
    tc.epochs = 1500;
    tc.learning_rate = 5e-3;
    tc.seed = 2;
    return train(init_weights(c, 3), tg, ts, 1.0, tc).weights;
  }();
  return w;
}

}  // namespace

TEST(MonteCarlo, ConstantIntegrandHasZeroVariance) {
  const TaskSpace box(Vec::Zero(2), Vec::Ones(2));
  const McEstimate e = mc_cost_integral([](const Task&) { return 3.5; }, box, 100, 1);
  EXPECT_DOUBLE_EQ(e.integral, 3.5);
  EXPECT_EQ(e.var_est, 0.0);
}

TEST(MonteCarlo, LinearIntegrand) {
  const McEstimate e = mc_cost_integral([](const Task& t) { return t[0]; }, kUnit, 10000, 2);
  EXPECT_NEAR(e.integral, 0.5, 0.02);
  EXPECT_NEAR(e.var_f, 1.0 / 12.0, 0.01);
}

TEST(MonteCarlo, VolumeScaling) {
  const TaskSpace box(Vec::Constant(1, 2.0), Vec::Constant(1, 5.0));
  const McEstimate e = mc_cost_integral([](const Task&) { return 1.0; }, box, 10, 1);
  EXPECT_DOUBLE_EQ(e.integral, 3.0);
}

TEST(MonteCarlo, VarianceEstimateDecaysAsOneOverN) {
  std::vector<double> lx, ly;
  for (std::size_t n : {100u, 1000u, 10000u}) {
    const McEstimate e =
        mc_cost_integral([](const Task& t) { return std::sin(3 * t[0]) + t[0] * t[0]; }, kUnit, n, 5);
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(e.var_est));
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / 3;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / 3;
  double sxy = 0.0, sxx = 0.0;
  for (int i = 0; i < 3; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  EXPECT_NEAR(sxy / sxx, -1.0, 0.15);
}

TEST(MonteCarlo, UnbiasedOverReplicates) {
  const TaskSpace box(Vec::Zero(2), Vec::Ones(2));
  auto f = [](const Task& t) { return t[0] * t[0] + 2 * t[0] * t[1] + 3 * t[1]; };
  const double exact = 1.0 / 3.0 + 0.5 + 1.5;
  double mean = 0.0, var = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const McEstimate e = mc_cost_integral(f, box, 200, 1000 + s);
    mean += e.integral / 100;
    var += e.var_est / 100;
  }
  EXPECT_LT(std::abs(mean - exact), 3 * std::sqrt(var));
  // the replicate mean carries 1/100 of the single-run variance
  EXPECT_LT(std::abs(mean - exact), 3 * std::sqrt(var / 100));
}

TEST(Lipschitz, AffineMapIsExact) {
  const SystemSpec spec = double_integrator_spec(kUnit);
  for (const std::string method : {"finite_difference", "pairwise"}) {
    LipschitzProbeConfig cfg;
    cfg.method = method;
    cfg.pairs = 200;
    const LipschitzEstimates e = estimate_lipschitz(affine_map(-2.5, 0.3, 0.7), spec, kUnit, cfg);
    EXPECT_NEAR(e.K, 2.5, 1e-6) << method;
    EXPECT_NEAR(e.L_dur, 0.7, 1e-6) << method;
    EXPECT_GT(e.pairs_used, 0);
  }
}

TEST(Lipschitz, ConstantMapHasZeroConstants) {
  const SystemSpec spec = double_integrator_spec(kUnit);
  const LipschitzEstimates e = estimate_lipschitz(affine_map(0.0, 0.3, 0.0), spec, kUnit, {});
  EXPECT_EQ(e.K, 0.0);
  EXPECT_EQ(e.L_dur, 0.0);
  ASSERT_EQ(e.m.size(), e.constraint_names.size());
  for (double m : e.m) {
    EXPECT_GE(m, 0.0);
    EXPECT_TRUE(std::isfinite(m));
  }
}

TEST(Lipschitz, UnknownMethodIsRejected) {
  LipschitzProbeConfig cfg;
  cfg.method = "exact";
  EXPECT_THROW(estimate_lipschitz(affine_map(1, 0, 0), double_integrator_spec(kUnit), kUnit, cfg), Error);
}

TEST(Lipschitz, StableUnderBudgetDoubling) {
  const SystemSpec spec = double_integrator_spec(kDi);
  const TrajectoryMap map = approximator_map(trained_di_weights());
  LipschitzProbeConfig a, b;
  a.grid_n = 41;
  b.grid_n = 81;
  const LipschitzEstimates ea = estimate_lipschitz(map, spec, kDi, a);
  const LipschitzEstimates eb = estimate_lipschitz(map, spec, kDi, b);
  EXPECT_LT(std::abs(eb.K - ea.K), 0.1 * ea.K);
  EXPECT_LT(std::abs(eb.L_dur - ea.L_dur), 0.1 * std::max(ea.L_dur, 1e-3));
  LipschitzProbeConfig pa, pb;
  pa.method = pb.method = "pairwise";
  pa.pairs = 2000;
  pb.pairs = 4000;
  pa.seed = pb.seed = 7;
  const double ka = estimate_lipschitz(map, spec, kDi, pa).K;
  const double kb = estimate_lipschitz(map, spec, kDi, pb).K;
  EXPECT_LT(std::abs(kb - ka), 0.1 * ka);
}

TEST(Lipschitz, LocalNeverExceedsGlobal) {
  const SystemSpec spec = double_integrator_spec(kDi);
  const TrajectoryMap map = approximator_map(trained_di_weights());
  for (double r : {0.05, 0.2, 10.0}) {
    LipschitzProbeConfig cfg;
    cfg.local_center = Vec::Constant(1, 0.8);
    cfg.local_radius = r;
    const LipschitzEstimates e = estimate_lipschitz(map, spec, kDi, cfg);
    EXPECT_LE(e.K_local, e.K);
    EXPECT_LE(e.L_dur_local, e.L_dur);
    for (std::size_t g = 0; g < e.m.size(); ++g) EXPECT_LE(e.m_local[g], e.m[g]);
    const ViolationBound gl = violation_bound(e, 0.1, false), lo = violation_bound(e, 0.1, true);
    for (std::size_t g = 0; g < gl.bound.size(); ++g) EXPECT_LE(lo.bound[g], gl.bound[g]);
  }
}

TEST(ViolationBound, FormulaAndZeroRadius) {
  LipschitzEstimates e;
  e.K = 1.0;
  e.L_dur = 0.5;
  e.m = {2.0};
  e.constraint_names = {"dynamics"};
  EXPECT_NEAR(violation_bound(e, 0.1, false).bound[0], 0.5, 1e-15);
  EXPECT_EQ(violation_bound(e, 0.0, false).bound[0], 0.0);
  EXPECT_THROW(violation_bound(e, -1.0, false), Error);
}

TEST(ViolationBound, MonotoneInEveryArgument) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    LipschitzEstimates e;
    e.K = u(rng);
    e.L_dur = u(rng);
    e.m = {u(rng), u(rng)};
    const double eps = u(rng), de = u(rng);
    const double b0 = violation_bound(e, eps, false).bound[0];
    EXPECT_GE(b0, 0.0);
    EXPECT_LE(b0, violation_bound(e, eps + de, false).bound[0]);
    LipschitzEstimates f = e;
    f.K += de;
    EXPECT_LE(b0, violation_bound(f, eps, false).bound[0]);
    f = e;
    f.L_dur += de;
    EXPECT_LE(b0, violation_bound(f, eps, false).bound[0]);
    f = e;
    f.m[0] += de;
    EXPECT_LE(b0, violation_bound(f, eps, false).bound[0]);
  }
}

TEST(ViolationMeasured, ExactSolutionsAreFeasible) {
  const SystemSpec spec = double_integrator_spec(kDi);
  const int L = 16;
  const SolverConfig sc;
  const TrajectoryMap solved = [&](const Task& t) {
    const SolveReport r = solve_original(spec, t, L, sc);
    const Trajectory tr = transcribe(spec, t, L).unpack(r.solution);
    return Prediction{tr.states, tr.duration};
  };
  const ViolationProfile p = violation_measured(solved, spec, kDi, 11);
  ASSERT_EQ(p.tasks.size(), 11u);
  for (double v : p.max_violation) EXPECT_LT(v, sc.feas_tol);
}

TEST(ViolationMeasured, LeastSquaresControlsAreExactForAffineDynamics) {
  const SystemSpec spec = double_integrator_spec(kDi);
  const Trajectory oracle = double_integrator_oracle(1.0, 1.0).sample(30);
  const Trajectory tr = completed_trajectory(spec, task1(1.0), Prediction{oracle.states, 1.0});
  const NlpInstance nlp = transcribe(spec, task1(1.0), 30);
  const Vec dyn = nlp.eq_residuals(nlp.pack(tr)).head(29 * 2);
  const Vec dyn_oracle = nlp.eq_residuals(nlp.pack(oracle)).head(29 * 2);
  EXPECT_LE(dyn.norm(), dyn_oracle.norm() + 1e-12);
}

TEST(ViolationBound, DominatesMeasuredViolationOnTrainedModel) {
  const SystemSpec spec = double_integrator_spec(kDi);
  const TrajectoryMap map = approximator_map(trained_di_weights());
  const LipschitzEstimates lip = estimate_lipschitz(map, spec, kDi, {});
  const double eps = covering_radius(sample_uniform(kDi, 30, 1));
  const ViolationBound vb = violation_bound(lip, eps, false);
  const ViolationProfile prof = violation_measured(map, spec, kDi, 1000);
  ASSERT_EQ(vb.bound.size(), prof.max_violation.size());
  for (std::size_t g = 0; g < vb.bound.size(); ++g)
    EXPECT_LE(prof.max_violation[g], 1.2 * vb.bound[g]) << prof.names[g];
}
