#ifndef GTL_GUIDED_HPP_
#define GTL_GUIDED_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gtl/approximator.hpp"
#include "gtl/collocation.hpp"
#include "gtl/common.hpp"
#include "gtl/nlp_solver.hpp"
#include "gtl/systems.hpp"
#include "gtl/taskspace.hpp"

namespace gtl {

/// rho^k = min(max, initial * growth^k).
struct RhoSchedule {
  double initial = 5.0;
  double growth = 1.0;
  double max = kInf;

  double at(int k) const { return std::min(max, initial * std::pow(growth, k)); }
  double limit() const { return growth > 1.0 ? max : initial; }
};

enum class StoppingMode { multiplier_delta, recon_error_delta };

inline std::string to_string(StoppingMode m) {
  return m == StoppingMode::multiplier_delta ? "multiplier_delta" : "recon_error_delta";
}

struct GtlConfig {
  int n_tasks = 200;
  double gamma = 1.0;
  RhoSchedule rho;
  double alpha = 0.0;
  int max_iterations = 2;
  StoppingMode stopping = StoppingMode::recon_error_delta;
  double stopping_tol = 0.0;
  bool resample_each_iter = false;  // GTL-0 only

  void validate() const {
    require(n_tasks >= 1, "n_tasks must be >= 1", "invalid_config");
    require(gamma > 0.0, "gamma must be > 0", "invalid_config");
    require(rho.initial >= 0.0 && rho.growth >= 1.0 && rho.max >= rho.initial,
            "rho schedule must be nonnegative and nondecreasing", "invalid_config");
    require(alpha >= 0.0 && alpha <= 1.0, "alpha must be in [0, 1]", "invalid_config");
    require(max_iterations >= 0, "max_iterations must be >= 0", "invalid_config");
    require(stopping_tol >= 0.0, "stopping_tol must be >= 0", "invalid_config");
    require(stopping != StoppingMode::multiplier_delta || alpha > 0.0,
            "multiplier_delta stopping requires alpha > 0", "invalid_config");
    require(!resample_each_iter || alpha == 0.0, "resample_each_iter is a GTL-0 (alpha = 0) option",
            "invalid_config");
  }
};

/// Everything the coordinator needs besides the task set and the GTL schedule.
struct GtlContext {
  SystemSpec spec;
  TaskSpace space;
  int nodes = 64;
  SolverConfig solver;
  TrainConfig train;
  int workers = 1;
  std::uint64_t seed = 0;  // drives resampling
  std::vector<double> thresholds{0.01, 0.015};
};

/// Per-task primal iterate, consensus point Z_i and multiplier Lambda_i, layout (X, gamma T).
struct TaskIterate {
  Trajectory traj;
  Vec z;
  Vec lambda;
  double cost = 0.0;  // L(X, U, T)
  SolveStatus status = SolveStatus::max_iter;
  bool solved = false;
};

struct AdmmState {
  int k = 0;
  double rho = 0.0;
  double alpha = 0.0;
  double gamma = 1.0;
  bool resample_each_iter = false;
  TaskSet tasks;
  std::vector<TaskIterate> iterates;
  // Held-out tasks: solved with their own proximal terms, never used for regression.
  TaskSet eval_tasks;
  std::vector<TaskIterate> eval_iterates;
  ApproximatorWeights weights;
};

struct IterationMetrics {
  int k = 0;
  double rho = 0.0;
  double mean_ninf = 0.0;  // training tasks, |X_i - Xhat_i|_inf
  double max_ninf = 0.0;
  double mean_ninf_sq = 0.0;
  std::vector<double> frac_gt;
  double mean_duration_error = 0.0;
  double mean_cost = 0.0;
  double multiplier_norm = 0.0;
  double recon_error = 0.0;  // R_gamma on the training targets
  double augmented_lagrangian = 0.0;
  int n_failed = 0;
  std::vector<double> train_errors;
  // held-out tasks (empty when none)
  double test_mean_ninf = 0.0;
  double test_max_ninf = 0.0;
  std::vector<double> test_frac_gt;
  std::vector<double> test_errors;
};

namespace detail {

inline TaskIterate iterate_from_report(const NlpInstance& nlp, const SolveReport& r) {
  TaskIterate it;
  it.traj = nlp.unpack(r.solution);
  it.cost = nlp.trajectory_cost(r.solution);
  it.status = r.status;
  it.solved = r.status == SolveStatus::converged;
  return it;
}

inline Vec consensus_point(const Prediction& pr, double gamma) {
  return consensus_vector(pr.states, pr.duration, gamma);
}

inline std::vector<RegressionTarget> shifted_targets(const std::vector<TaskIterate>& its,
                                                     double gamma, std::vector<std::size_t>* kept) {
  std::vector<RegressionTarget> out;
  kept->clear();
  for (std::size_t i = 0; i < its.size(); ++i) {
    if (!its[i].solved) continue;
    const TaskIterate& it = its[i];
    const int L = it.traj.nodes(), p = it.traj.state_dim();
    RegressionTarget t;
    t.states = it.traj.states + unflatten_rows(it.lambda.head(L * p), L, p);
    t.duration = it.traj.duration + it.lambda[L * p] / gamma;
    out.push_back(std::move(t));
    kept->push_back(i);
  }
  return out;
}

inline TaskSet subset(const TaskSet& ts, const std::vector<std::size_t>& idx) {
  TaskSet out;
  out.seed = ts.seed;
  for (std::size_t i : idx) out.tasks.push_back(ts[i]);
  return out;
}

inline void refresh_consensus(const Network& net, const ApproximatorWeights& w, const TaskSet& ts,
                              std::vector<TaskIterate>& its, double gamma) {
  for (std::size_t i = 0; i < ts.size(); ++i)
    its[i].z = consensus_point(net.forward(w.params, ts[i]), gamma);
}

inline std::vector<TaskIterate> solve_original_iterates(const GtlContext& ctx, const TaskSet& ts) {
  const auto reps = solve_original_batch(ctx.spec, ts, ctx.nodes, ctx.solver, ctx.workers);
  std::vector<TaskIterate> out;
  out.reserve(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const NlpInstance nlp = transcribe(ctx.spec, ts[i], ctx.nodes);
    out.push_back(iterate_from_report(nlp, reps[i]));
    out.back().lambda = Vec::Zero(ctx.nodes * ctx.spec.state_dim + 1);
  }
  return out;
}

// Eq. (5) solves for every iterate, warm-started from its previous (X, U, T).
inline void proximal_solves(const GtlContext& ctx, const TaskSet& ts, std::vector<TaskIterate>& its,
                            double rho, double gamma) {
  std::vector<NlpInstance> nlps;
  std::vector<std::optional<Vec>> warm;
  nlps.reserve(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    nlps.push_back(transcribe(ctx.spec, ts[i], ctx.nodes,
                              ProximalTerm{its[i].z, its[i].lambda, rho, gamma}));
    warm.emplace_back(nlps.back().pack(its[i].traj));
  }
  const auto reps = solve_batch(nlps, warm, ctx.solver, ctx.workers);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const bool ok = reps[i].status == SolveStatus::converged;
    its[i].status = reps[i].status;
    its[i].solved = ok;
    if (ok) {
      its[i].traj = nlps[i].unpack(reps[i].solution);
      its[i].cost = nlps[i].trajectory_cost(reps[i].solution);
    }
  }
}

inline void update_multipliers(std::vector<TaskIterate>& its, double alpha, double gamma) {
  if (alpha == 0.0) return;
  for (TaskIterate& it : its)
    if (it.solved) it.lambda += alpha * (consensus_vector(it.traj, gamma) - it.z);
}

}  // namespace detail

/// (1/N) sum_i L_i + rho/2 sum_i |(X_i, gamma T_i) - Z_i + Lambda_i|^2 over the solved tasks.
inline double augmented_lagrangian(const AdmmState& s) {
  double cost = 0.0, pen = 0.0;
  int n = 0;
  for (const TaskIterate& it : s.iterates) {
    if (!it.solved) continue;
    ++n;
    cost += it.cost;
    pen += (consensus_vector(it.traj, s.gamma) - it.z + it.lambda).squaredNorm();
  }
  if (n == 0) return 0.0;
  return cost / n + 0.5 * s.rho * pen;
}

inline IterationMetrics compute_metrics(const AdmmState& s, const std::vector<double>& thresholds) {
  IterationMetrics m;
  m.k = s.k;
  m.rho = s.rho;
  m.augmented_lagrangian = augmented_lagrangian(s);
  const int L = s.weights.config.seq_len, p = s.weights.config.state_dim;
  auto errors = [&](const std::vector<TaskIterate>& its, std::vector<double>& out, double* dur,
                    double* recon, int* failed) {
    out.clear();
    double dsum = 0.0;
    for (const TaskIterate& it : its) {
      if (!it.solved) {
        if (failed) ++*failed;
        continue;
      }
      const Mat xhat = unflatten_rows(it.z.head(L * p), L, p);
      out.push_back((it.traj.states - xhat).lpNorm<Eigen::Infinity>());
      const double that = it.z[L * p] / s.gamma;
      dsum += std::abs(it.traj.duration - that);
      if (recon) {
        const Mat tx = it.traj.states + unflatten_rows(it.lambda.head(L * p), L, p);
        const double tt = it.traj.duration + it.lambda[L * p] / s.gamma;
        *recon += (tx - xhat).squaredNorm() + s.gamma * (tt - that) * (tt - that);
      }
    }
    if (dur) *dur = out.empty() ? 0.0 : dsum / out.size();
  };
  errors(s.iterates, m.train_errors, &m.mean_duration_error, &m.recon_error, &m.n_failed);
  if (!m.train_errors.empty()) {
    const ErrorStats st = error_statistics(m.train_errors, thresholds);
    m.mean_ninf = st.mean;
    m.max_ninf = st.max;
    m.frac_gt = st.exceed_fraction;
    double sq = 0.0;
    for (double e : m.train_errors) sq += e * e;
    m.mean_ninf_sq = sq / m.train_errors.size();
  }
  double cost = 0.0, lam = 0.0;
  int n = 0;
  for (const TaskIterate& it : s.iterates) {
    lam += it.lambda.squaredNorm();
    if (it.solved) {
      cost += it.cost;
      ++n;
    }
  }
  m.mean_cost = n ? cost / n : 0.0;
  m.multiplier_norm = std::sqrt(lam);
  errors(s.eval_iterates, m.test_errors, nullptr, nullptr, nullptr);
  if (!m.test_errors.empty()) {
    const ErrorStats st = error_statistics(m.test_errors, thresholds);
    m.test_mean_ninf = st.mean;
    m.test_max_ninf = st.max;
    m.test_frac_gt = st.exceed_fraction;
  }
  return m;
}

/// Iteration 0: prox-free solves, W^0 by plain regression, Z^0 = forward pass, Lambda^0 = 0.
inline AdmmState init(const TaskSet& tasks, const GtlConfig& cfg, const GtlContext& ctx,
                      const ApproximatorWeights& w0, const TaskSet& eval_tasks = {}) {
  cfg.validate();
  require(!tasks.tasks.empty(), "GTL needs at least one task");
  AdmmState s;
  s.k = 0;
  s.rho = cfg.rho.at(0);
  s.alpha = cfg.alpha;
  s.gamma = cfg.gamma;
  s.resample_each_iter = cfg.resample_each_iter;
  s.tasks = tasks;
  s.eval_tasks = eval_tasks;
  s.iterates = detail::solve_original_iterates(ctx, tasks);
  if (!eval_tasks.tasks.empty())
    s.eval_iterates = detail::solve_original_iterates(ctx, eval_tasks);

  std::vector<std::size_t> kept;
  const auto targets = detail::shifted_targets(s.iterates, cfg.gamma, &kept);
  require(!kept.empty(), "no task could be solved at initialization", "runtime_error");
  s.weights = train(w0, targets, detail::subset(tasks, kept), cfg.gamma, ctx.train).weights;

  const Network net(s.weights.config);
  detail::refresh_consensus(net, s.weights, s.tasks, s.iterates, cfg.gamma);
  detail::refresh_consensus(net, s.weights, s.eval_tasks, s.eval_iterates, cfg.gamma);
  return s;
}

/// One pass of Eq. (5) solves, Eq. (6) regression, consensus refresh and multiplier update.
inline AdmmState admm_iterate(const AdmmState& prev, const GtlConfig& cfg, const GtlContext& ctx) {
  AdmmState s = prev;
  const Network net(s.weights.config);
  if (s.resample_each_iter) {
    // fresh tasks start from the network's own prediction with zero controls
    s.tasks = sample_uniform(ctx.space, prev.tasks.size(),
                             ctx.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(s.k + 1));
    s.iterates.assign(s.tasks.size(), TaskIterate{});
    for (std::size_t i = 0; i < s.tasks.size(); ++i) {
      const Prediction pr = net.forward(s.weights.params, s.tasks[i]);
      const Interval dT = ctx.spec.duration_bounds(s.tasks[i]);
      TaskIterate& it = s.iterates[i];
      it.traj.states = pr.states;
      it.traj.controls = Mat::Zero(ctx.nodes, ctx.spec.control_dim);
      it.traj.duration = dT.clamp(pr.duration);
      it.z = detail::consensus_point(pr, s.gamma);
      it.lambda = Vec::Zero(it.z.size());
    }
  }
  detail::proximal_solves(ctx, s.tasks, s.iterates, s.rho, s.gamma);
  if (!s.eval_tasks.tasks.empty())
    detail::proximal_solves(ctx, s.eval_tasks, s.eval_iterates, s.rho, s.gamma);

  std::vector<std::size_t> kept;
  const auto targets = detail::shifted_targets(s.iterates, s.gamma, &kept);
  if (!kept.empty())
    s.weights = train(s.weights, targets, detail::subset(s.tasks, kept), s.gamma, ctx.train).weights;

  detail::refresh_consensus(net, s.weights, s.tasks, s.iterates, s.gamma);
  detail::refresh_consensus(net, s.weights, s.eval_tasks, s.eval_iterates, s.gamma);
  detail::update_multipliers(s.iterates, s.alpha, s.gamma);
  detail::update_multipliers(s.eval_iterates, s.alpha, s.gamma);
  s.k = prev.k + 1;
  s.rho = cfg.rho.at(s.k);
  return s;
}

struct RunResult {
  AdmmState state;
  std::vector<IterationMetrics> metrics;  // entry 0 is the Regression baseline
  bool criterion_met = false;
  std::string stop_reason;  // "criterion" | "budget"
};

/// Runs init and then admm_iterate until the stopping criterion or the iteration budget.
inline RunResult run(const TaskSet& tasks, const GtlConfig& cfg, const GtlContext& ctx,
                     const ApproximatorWeights& w0, const TaskSet& eval_tasks = {},
                     const std::function<void(const AdmmState&, const IterationMetrics&)>&
                         on_iteration = nullptr) {
  cfg.validate();
  RunResult res;
  res.state = init(tasks, cfg, ctx, w0, eval_tasks);
  res.metrics.push_back(compute_metrics(res.state, ctx.thresholds));
  if (on_iteration) on_iteration(res.state, res.metrics.back());
  res.stop_reason = "budget";
  for (int it = 0; it < cfg.max_iterations; ++it) {
    AdmmState next = admm_iterate(res.state, cfg, ctx);
    res.metrics.push_back(compute_metrics(next, ctx.thresholds));
    if (on_iteration) on_iteration(next, res.metrics.back());
    bool stop = false;
    if (cfg.stopping == StoppingMode::multiplier_delta) {
      double d = 0.0;
      for (std::size_t i = 0; i < next.iterates.size(); ++i)
        d += (next.iterates[i].lambda - res.state.iterates[i].lambda).squaredNorm();
      stop = std::sqrt(d) <= cfg.stopping_tol;
    } else {
      const auto& a = res.metrics[res.metrics.size() - 2];
      const auto& b = res.metrics.back();
      stop = std::abs(b.mean_ninf_sq - a.mean_ninf_sq) <= cfg.stopping_tol;
    }
    res.state = std::move(next);
    if (stop) {
      res.criterion_met = true;
      res.stop_reason = "criterion";
      break;
    }
  }
  return res;
}

struct Proposition1Report {
  int regime = 0;  // 1: 0 < alpha <= 1 and rho^k > L eventually; 2: alpha = 0 and rho^k -> inf
  std::string message;
  bool warning = false;
};

inline Proposition1Report proposition1_check(const GtlConfig& cfg, double lipschitz_L) {
  Proposition1Report r;
  if (cfg.alpha > 0.0 && cfg.alpha <= 1.0 && cfg.rho.limit() > lipschitz_L) {
    r.regime = 1;
    r.message = "0 < alpha <= 1 and rho^k eventually exceeds L";
  } else if (cfg.alpha == 0.0 && cfg.rho.growth > 1.0 && std::isinf(cfg.rho.max)) {
    r.regime = 2;
    r.message = "alpha = 0 and rho^k grows without bound";
  } else {
    r.warning = true;
    r.message = cfg.alpha == 0.0
                    ? "alpha = 0 with a bounded rho schedule: no convergence guarantee"
                    : "rho^k never exceeds L: no convergence guarantee";
  }
  return r;
}

}  // namespace gtl

#endif  // GTL_GUIDED_HPP_
