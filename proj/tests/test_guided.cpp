#include <gtest/gtest.h>

#include "gtl/guided.hpp"
#include "test_helpers.hpp"

using namespace gtl;
using namespace gtl::testing;

namespace {

const TaskSpace kSpace(Vec::Constant(1, 0.5), Vec::Constant(1, 1.5));
constexpr int kNodes = 16;

GtlContext small_context(int epochs = 200) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.learning_rate = 1e-2;
  tc.seed = 4;
  return GtlContext{double_integrator_spec(kSpace), kSpace, kNodes, SolverConfig{}, tc, 1, 7,
                    {0.01, 0.015}};
}

ApproximatorWeights small_weights(std::uint64_t seed = 3) {
  NetConfig c;
  c.n_hidden = 1;
  c.hidden_size = 8;
  c.n_upsample = 2;
  c.kernel_len = 3;
  c.state_dim = 2;
  c.seq_len = kNodes;
  c.input_center = Vec::Constant(1, 1.0);
  c.input_scale = Vec::Constant(1, 0.5);
  return init_weights(c, seed);
}

GtlConfig gtl_config(double alpha, int iterations, int n = 6) {
  GtlConfig g;
  g.n_tasks = n;
  g.alpha = alpha;
  g.max_iterations = iterations;
  g.rho = RhoSchedule{5.0, 1.0, kInf};
  return g;
}

Vec residual(const TaskIterate& it, double gamma) { return consensus_vector(it.traj, gamma) - it.z; }

}  // namespace

TEST(GtlConfig, Validation) {
  GtlConfig g = gtl_config(0.0, 2);
  EXPECT_NO_THROW(g.validate());
  g.stopping = StoppingMode::multiplier_delta;
  try {
    g.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "invalid_config");
  }
  g.alpha = 0.5;
  EXPECT_NO_THROW(g.validate());
  g.alpha = 1.5;
  EXPECT_THROW(g.validate(), Error);
  g = gtl_config(0.0, 2);
  g.rho = RhoSchedule{5.0, 0.9, kInf};
  EXPECT_THROW(g.validate(), Error);
}

TEST(RhoSchedule, NondecreasingAndCapped) {
  const RhoSchedule r{5.0, 1.5, 20.0};
  EXPECT_DOUBLE_EQ(r.at(0), 5.0);
  EXPECT_DOUBLE_EQ(r.at(2), 11.25);
  EXPECT_DOUBLE_EQ(r.at(10), 20.0);
  for (int k = 0; k < 20; ++k) EXPECT_LE(r.at(k), r.at(k + 1));
}

TEST(Init, SingleTaskHasZeroMultiplier) {
  TaskSet ts;
  ts.tasks = {task1(1.0)};
  const AdmmState s = init(ts, gtl_config(0.0, 0, 1), small_context(), small_weights());
  ASSERT_EQ(s.iterates.size(), 1u);
  EXPECT_EQ(s.iterates[0].lambda.size(), 2 * kNodes + 1);
  EXPECT_EQ(s.iterates[0].lambda.lpNorm<Eigen::Infinity>(), 0.0);
  EXPECT_TRUE(s.iterates[0].solved);
  EXPECT_EQ(s.k, 0);
}

TEST(Init, IsTheRegressionBaseline) {
  // iteration 0 trains on the prox-free solutions with zero shifts
  const TaskSet ts = sample_uniform(kSpace, 6, 1);
  const GtlContext ctx = small_context();
  const AdmmState s = init(ts, gtl_config(0.0, 0), ctx, small_weights());
  std::vector<RegressionTarget> tg;
  const auto reps = solve_original_batch(ctx.spec, ts, kNodes, ctx.solver);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const Trajectory tr = transcribe(ctx.spec, ts[i], kNodes).unpack(reps[i].solution);
    tg.push_back({tr.states, tr.duration});
  }
  const ApproximatorWeights w = train(small_weights(), tg, ts, 1.0, ctx.train).weights;
  EXPECT_EQ(w.params, s.weights.params);
}

TEST(Init, DeterministicUnderFixedSeeds) {
  const TaskSet ts = sample_uniform(kSpace, 6, 1);
  const AdmmState a = init(ts, gtl_config(0.0, 0), small_context(), small_weights());
  const AdmmState b = init(ts, gtl_config(0.0, 0), small_context(), small_weights());
  EXPECT_EQ(a.weights.params, b.weights.params);
  for (std::size_t i = 0; i < a.iterates.size(); ++i) {
    EXPECT_EQ(a.iterates[i].z, b.iterates[i].z);
    EXPECT_EQ(a.iterates[i].traj.states, b.iterates[i].traj.states);
  }
}

TEST(Iterate, AlphaZeroKeepsMultipliersAtZero) {
  const TaskSet ts = sample_uniform(kSpace, 6, 1);
  const GtlContext ctx = small_context();
  const GtlConfig cfg = gtl_config(0.0, 2);
  AdmmState s = init(ts, cfg, ctx, small_weights());
  for (int k = 0; k < 2; ++k) {
    s = admm_iterate(s, cfg, ctx);
    for (const auto& it : s.iterates) EXPECT_EQ(it.lambda.lpNorm<Eigen::Infinity>(), 0.0);
  }
}

TEST(Iterate, ExactFitLeavesMultipliersUnchanged) {
  TaskIterate it;
  it.traj = double_integrator_oracle(1.0, 1.0).sample(kNodes);
  it.z = consensus_vector(it.traj, 2.0);
  it.lambda = Vec::LinSpaced(it.z.size(), -1.0, 1.0);
  it.solved = true;
  std::vector<TaskIterate> its{it};
  detail::update_multipliers(its, 1.0, 2.0);
  EXPECT_EQ(its[0].lambda, it.lambda);
}

TEST(Iterate, MultiplierUpdateIdentityAndZWConsistency) {
  const TaskSet ts = sample_uniform(kSpace, 6, 1);
  const GtlContext ctx = small_context();
  GtlConfig cfg = gtl_config(0.5, 2);
  cfg.gamma = 2.0;
  AdmmState s = init(ts, cfg, ctx, small_weights());
  for (int k = 0; k < 2; ++k) {
    const AdmmState next = admm_iterate(s, cfg, ctx);
    const Network net(next.weights.config);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const TaskIterate& a = s.iterates[i];
      const TaskIterate& b = next.iterates[i];
      const Vec expected = b.solved ? Vec(cfg.alpha * residual(b, cfg.gamma)) : Vec::Zero(a.lambda.size());
      EXPECT_LT((b.lambda - a.lambda - expected).lpNorm<Eigen::Infinity>(), 1e-14);
      const Prediction pr = net.forward(next.weights.params, ts[i]);
      EXPECT_EQ(b.z, consensus_vector(pr.states, pr.duration, cfg.gamma)) << "task " << i;
    }
    s = next;
  }
}

TEST(Iterate, AugmentedLagrangianMatchesIndependentRecompute) {
  TaskSet ts;
  ts.tasks = {task1(1.0)};
  const GtlContext ctx = small_context();
  const GtlConfig cfg = gtl_config(1.0, 1, 1);
  const AdmmState s = admm_iterate(init(ts, cfg, ctx, small_weights()), cfg, ctx);
  const TaskIterate& it = s.iterates[0];
  // cost from scratch: T / L * sum u^2 for the double integrator
  const double T = it.traj.duration;
  const double cost = T / kNodes * it.traj.controls.squaredNorm();
  Vec y(2 * kNodes + 1);
  for (int k = 0; k < kNodes; ++k) {
    y[2 * k] = it.traj.states(k, 0);
    y[2 * k + 1] = it.traj.states(k, 1);
  }
  y[2 * kNodes] = T;
  const double expected = cost + 2.5 * (y - it.z + it.lambda).squaredNorm();
  EXPECT_NEAR(augmented_lagrangian(s), expected, 1e-10 * std::max(1.0, expected));
}

TEST(Iterate, GtlZeroIsThePenaltyMethod) {
  const TaskSet ts = sample_uniform(kSpace, 5, 2);
  const GtlContext ctx = small_context();
  GtlConfig cfg = gtl_config(0.0, 1, 5);
  cfg.gamma = 2.0;
  const AdmmState s = admm_iterate(init(ts, cfg, ctx, small_weights()), cfg, ctx);
  std::vector<RegressionTarget> tg;
  double cost = 0.0;
  for (const auto& it : s.iterates) {
    ASSERT_TRUE(it.solved);
    tg.push_back({it.traj.states, it.traj.duration});
    cost += it.traj.duration / kNodes * it.traj.controls.squaredNorm();
  }
  // |(X, gT) - (Xhat, gThat)|^2 = |X - Xhat|^2 + g^2 (T - That)^2, i.e. R with weight g^2
  const double penalty = reconstruction_error(s.weights, tg, ts, cfg.gamma * cfg.gamma);
  const double expected = cost / ts.size() + 0.5 * s.rho * penalty;
  EXPECT_NEAR(augmented_lagrangian(s), expected, 1e-10 * expected);
}

TEST(Iterate, MultipliersAccumulateResidualsWithFrozenWeights) {
  const TaskSet ts = sample_uniform(kSpace, 4, 5);
  GtlContext ctx = small_context();
  const GtlConfig cfg = gtl_config(1.0, 2, 4);
  AdmmState s = init(ts, cfg, ctx, small_weights());
  ctx.train.epochs = 0;
  std::vector<Vec> sum(ts.size(), Vec::Zero(2 * kNodes + 1));
  for (int k = 0; k < 2; ++k) {
    s = admm_iterate(s, cfg, ctx);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      ASSERT_TRUE(s.iterates[i].solved);
      sum[i] += residual(s.iterates[i], cfg.gamma);
    }
  }
  for (std::size_t i = 0; i < ts.size(); ++i)
    EXPECT_LT((s.iterates[i].lambda - sum[i]).lpNorm<Eigen::Infinity>(), 1e-13);
}

TEST(Iterate, ResamplingDrawsFreshTasks) {
  const TaskSet ts = sample_uniform(kSpace, 4, 5);
  const GtlContext ctx = small_context(50);
  GtlConfig cfg = gtl_config(0.0, 1, 4);
  cfg.resample_each_iter = true;
  const AdmmState s0 = init(ts, cfg, ctx, small_weights());
  const AdmmState s1 = admm_iterate(s0, cfg, ctx);
  ASSERT_EQ(s1.tasks.size(), ts.size());
  EXPECT_NE(s1.tasks[0][0], ts[0][0]);
  for (const Task& t : s1.tasks.tasks) EXPECT_TRUE(kSpace.contains(t));
}

TEST(Run, ConstantRhoGtlZeroPlateausAboveZero) {
  const TaskSet ts = sample_uniform(kSpace, 8, 9);
  const GtlContext ctx = small_context(150);
  GtlConfig cfg = gtl_config(0.0, 6, 8);
  const RunResult r = run(ts, cfg, ctx, small_weights());
  ASSERT_EQ(r.metrics.size(), 7u);
  for (std::size_t k = 1; k < r.metrics.size(); ++k)
    EXPECT_LE(r.metrics[k].mean_ninf, r.metrics[0].mean_ninf) << "iteration " << k;
  int calm = 0;
  for (std::size_t k = 1; k < r.metrics.size(); ++k) {
    const double cur = r.metrics[k].recon_error;
    const double d = std::abs(cur - r.metrics[k - 1].recon_error);
    calm = d < 0.1 * cur ? calm + 1 : 0;
  }
  EXPECT_GE(calm, 3);
  EXPECT_GT(r.metrics.back().recon_error, 0.0);
}

TEST(Run, MultiplierDeltaStoppingHaltsEarly) {
  const TaskSet ts = sample_uniform(kSpace, 4, 9);
  GtlConfig cfg = gtl_config(0.5, 5, 4);
  cfg.stopping = StoppingMode::multiplier_delta;
  cfg.stopping_tol = 1e9;
  const RunResult r = run(ts, cfg, small_context(50), small_weights());
  EXPECT_TRUE(r.criterion_met);
  EXPECT_EQ(r.stop_reason, "criterion");
  EXPECT_EQ(r.metrics.size(), 2u);
}

TEST(Proposition1, Regimes) {
  GtlConfig g = gtl_config(0.5, 1);
  EXPECT_EQ(proposition1_check(g, 3.0).regime, 1);
  EXPECT_FALSE(proposition1_check(g, 3.0).warning);
  EXPECT_TRUE(proposition1_check(g, 10.0).warning);

  g.alpha = 0.0;
  const Proposition1Report none = proposition1_check(g, 3.0);
  EXPECT_EQ(none.regime, 0);
  EXPECT_TRUE(none.warning);

  g.rho = RhoSchedule{5.0, 1.5, kInf};
  EXPECT_EQ(proposition1_check(g, 3.0).regime, 2);
}
