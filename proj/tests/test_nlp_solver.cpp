#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "gtl/collocation.hpp"
#include "gtl/nlp_solver.hpp"
#include "test_helpers.hpp"

using namespace gtl;
using namespace gtl::testing;

namespace {

const TaskSpace kSpace(Vec::Constant(1, 0.5), Vec::Constant(1, 1.5));

// min |v|^2 with no constraints and no bounds.
struct Quadratic {
  int n = 5;
  int num_vars() const { return n; }
  double objective(const Vec& z, Vec* g) const {
    if (g) *g = 2.0 * z;
    return z.squaredNorm();
  }
  Vec eq_residuals(const Vec&) const { return Vec(0); }
  Vec ineq_residuals(const Vec&) const { return Vec(0); }
  SparseMat eq_jacobian(const Vec&) const { return SparseMat(0, n); }
  SparseMat ineq_jacobian(const Vec&) const { return SparseMat(0, n); }
  SparseMat lagrangian_hessian(const Vec&, const Vec&, const Vec&) const {
    SparseMat H(n, n);
    H.setIdentity();
    return 2.0 * H;
  }
  Vec lower_bounds() const { return Vec::Constant(n, -kInf); }
  Vec upper_bounds() const { return Vec::Constant(n, kInf); }
};

void expect_report_contract(const SolveReport& r, const SolverConfig& cfg) {
  if (r.status == SolveStatus::converged) {
    EXPECT_LE(r.feas_residual, cfg.feas_tol);
    EXPECT_LE(r.stationarity, cfg.opt_tol);
  }
}

}  // namespace

TEST(SolverConfig, Validation) {
  SolverConfig c;
  EXPECT_NO_THROW(c.validate());
  c.penalty_growth = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = SolverConfig{};
  c.feas_tol = 0.0;
  EXPECT_THROW(c.validate(), Error);
}

// The cost sums l over all L_T nodes with weight T / L_T, which over-weights the endpoints by
// O(1/L_T). Positions match the continuous oracle to 1e-2 at L_T = 50; velocities carry the
// first-order quadrature bias and halve when L_T doubles.
TEST(Solve, DoubleIntegratorMatchesOracle) {
  const SystemSpec s = double_integrator_spec(kSpace);
  const int L = 50;
  const NlpInstance nlp = transcribe(s, task1(1.0), L);
  const SolverConfig cfg;
  const SolveReport r = solve_original(s, task1(1.0), L, cfg);
  ASSERT_EQ(r.status, SolveStatus::converged);
  expect_report_contract(r, cfg);
  EXPECT_NEAR(r.objective / 12.0, 1.0, 0.02);
  const Trajectory tr = nlp.unpack(r.solution);
  const Trajectory oracle = double_integrator_oracle(1.0, 1.0).sample(L);
  EXPECT_LT((tr.states.col(0) - oracle.states.col(0)).lpNorm<Eigen::Infinity>(), 1e-2);

  const double dev50 = (tr.states - oracle.states).lpNorm<Eigen::Infinity>();
  const SolveReport r100 = solve_original(s, task1(1.0), 2 * L, cfg);
  const Trajectory tr100 = transcribe(s, task1(1.0), 2 * L).unpack(r100.solution);
  const double dev100 =
      (tr100.states - double_integrator_oracle(1.0, 1.0).sample(2 * L).states).lpNorm<Eigen::Infinity>();
  EXPECT_LT(dev50, 5e-2);
  EXPECT_GT(dev100 / dev50, 0.4);
  EXPECT_LT(dev100 / dev50, 0.6);
}

TEST(Solve, UnconstrainedQuadratic) {
  const SolverConfig cfg;
  const SolveReport r = solve(Quadratic{}, Vec::Constant(5, 3.0), cfg);
  EXPECT_EQ(r.status, SolveStatus::converged);
  EXPECT_LT(r.solution.norm(), 1e-6);
  EXPECT_LT(r.objective, cfg.opt_tol);
}

TEST(Solve, HugeRhoPinsTheSolutionToTheTarget) {
  const SystemSpec s = double_integrator_spec(kSpace);
  const int L = 20;
  const Trajectory oracle = double_integrator_oracle(1.0, 1.0).sample(L);
  // target: the oracle's collocation solution, which is feasible for the transcription
  const SolveReport base = solve_original(s, task1(1.0), L, SolverConfig{});
  const NlpInstance plain = transcribe(s, task1(1.0), L);
  const Trajectory feas = plain.unpack(base.solution);
  ProximalTerm prox{consensus_vector(feas, 1.0), Vec::Zero(2 * L + 1), 1e6, 1.0};
  const NlpInstance nlp = transcribe(s, task1(1.0), L, prox);
  const SolveReport r = solve(nlp, nlp.pack(oracle), SolverConfig{});
  // With rho far above the penalty the multiplier estimates move slowly, so the run may end on
  // max_iter; the primal point is what the proximal term fixes.
  EXPECT_NE(r.status, SolveStatus::infeasible_point);
  EXPECT_LT(r.feas_residual, 1e-6);
  const Vec y = consensus_vector(nlp.unpack(r.solution), 1.0);
  EXPECT_LT((y - prox.target).lpNorm<Eigen::Infinity>(), 1e-3);
}

TEST(Solve, InequalitiesAreRespected) {
  const SystemSpec s = speed_limited_spec(kSpace);
  const SolverConfig cfg;
  const SolveReport r = solve_original(s, task1(1.0), 30, cfg);
  ASSERT_EQ(r.status, SolveStatus::converged);
  const NlpInstance nlp = transcribe(s, task1(1.0), 30);
  EXPECT_GT(nlp.ineq_residuals(r.solution).maxCoeff(), -1e-4);  // limit is active
  EXPECT_GT(r.objective, 12.0);
  EXPECT_LE(nlp.ineq_residuals(r.solution).maxCoeff(), cfg.feas_tol);
  EXPECT_LE(nlp.eq_residuals(r.solution).lpNorm<Eigen::Infinity>(), cfg.feas_tol);
  const Vec& lo = nlp.lower_bounds();
  const Vec& hi = nlp.upper_bounds();
  EXPECT_TRUE(((r.solution.array() >= lo.array()) && (r.solution.array() <= hi.array())).all());
}

TEST(Solve, FeasibilityIsMonotoneWithSlack) {
  const SystemSpec s = speed_limited_spec(kSpace);
  for (double d : {0.6, 0.8, 0.9, 1.0}) {
    const SolveReport r = solve_original(s, task1(d), 25, SolverConfig{});
    for (std::size_t j = 1; j < r.feas_history.size(); ++j)
      EXPECT_LE(r.feas_history[j], 1.1 * r.feas_history[j - 1]) << "d = " << d << " outer " << j;
  }
}

TEST(Solve, MultipliersConvergeOnTheDoubleIntegratorFamily) {
  const SolverConfig cfg;
  const TaskSpace feasible(Vec::Constant(1, 0.5), Vec::Constant(1, 1.0));
  for (const SystemSpec& s : {double_integrator_spec(kSpace), speed_limited_spec(kSpace)})
  for (const Task& t : sample_uniform(feasible, 8, 4).tasks) {
    const SolveReport r = solve_original(s, t, 30, cfg);
    ASSERT_EQ(r.status, SolveStatus::converged);
    ASSERT_FALSE(r.multiplier_deltas.empty());
    EXPECT_LT(r.multiplier_deltas.back(), 1e-4);
    EXPECT_LE(r.stationarity, cfg.opt_tol);
  }
}

TEST(SolveBatch, SingletonEqualsSingleSolve) {
  const NlpInstance nlp = transcribe(double_integrator_spec(kSpace), task1(0.8), 16);
  const SolveReport a = solve(nlp, std::nullopt, SolverConfig{});
  const auto b = solve_batch(std::vector<NlpInstance>{nlp}, {std::nullopt}, SolverConfig{});
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(a.solution, b[0].solution);
  EXPECT_EQ(a.inner_iterations, b[0].inner_iterations);
}

TEST(SolveBatch, WorkerCountDoesNotChangeResults) {
  const SystemSpec s = double_integrator_spec(kSpace);
  std::vector<NlpInstance> nlps;
  std::vector<std::optional<Vec>> warm;
  for (const Task& t : sample_uniform(kSpace, 8, 12).tasks) {
    nlps.push_back(transcribe(s, t, 20));
    warm.emplace_back(std::nullopt);
  }
  const auto one = solve_batch(nlps, warm, SolverConfig{}, 1);
  const auto four = solve_batch(nlps, warm, SolverConfig{}, 4);
  for (std::size_t i = 0; i < nlps.size(); ++i) {
    EXPECT_EQ(one[i].solution, four[i].solution) << i;
    EXPECT_EQ(one[i].objective, four[i].objective) << i;
    EXPECT_EQ(one[i].status, four[i].status) << i;
  }
}

TEST(SolveBatch, InfeasibleElementDoesNotAbortTheBatch) {
  const SystemSpec good = double_integrator_spec(kSpace);
  const SystemSpec bad = contradictory_spec(kSpace);
  std::vector<NlpInstance> nlps{transcribe(good, task1(0.7), 12), transcribe(bad, task1(1.0), 12),
                                transcribe(good, task1(1.3), 12)};
  const SolverConfig cfg;
  const auto reps = solve_batch(nlps, {std::nullopt, std::nullopt, std::nullopt}, cfg, 2);
  EXPECT_EQ(reps[0].status, SolveStatus::converged);
  EXPECT_EQ(reps[1].status, SolveStatus::infeasible_point);
  EXPECT_EQ(reps[2].status, SolveStatus::converged);
  for (const auto& r : reps) expect_report_contract(r, cfg);
}

TEST(Solve, WarmStartFromThePreviousIterateIsNotSlower) {
  const SystemSpec s = double_integrator_spec(kSpace);
  const int L = 24;
  std::mt19937_64 rng(21);
  long warm_total = 0, cold_total = 0;
  int worst_ratio_violations = 0;
  for (const Task& t : sample_uniform(kSpace, 20, 31).tasks) {
    const SolveReport base = solve_original(s, t, L, SolverConfig{});
    const NlpInstance plain = transcribe(s, t, L);
    const Trajectory prev = plain.unpack(base.solution);
    // consensus target: previous iterate perturbed as an imperfect network prediction would be
    ProximalTerm prox{consensus_vector(prev, 1.0) + 0.02 * random_vec(2 * L + 1, rng),
                      Vec::Zero(2 * L + 1), 5.0, 1.0};
    prox.target[2 * L] = 1.0;
    const NlpInstance nlp = transcribe(s, t, L, prox);
    const SolveReport warm = solve(nlp, plain.pack(prev), SolverConfig{});
    const SolveReport cold = solve(nlp, nlp.pack(s.initial_guesses(t, L)[0]), SolverConfig{});
    EXPECT_EQ(warm.status, SolveStatus::converged);
    warm_total += warm.inner_iterations;
    cold_total += cold.inner_iterations;
    worst_ratio_violations += warm.inner_iterations > 2 * std::max(1, cold.inner_iterations);
  }
  EXPECT_EQ(worst_ratio_violations, 0);
  EXPECT_LE(warm_total, 2 * cold_total);
}
