#ifndef GTL_BOUNDS_HPP_
#define GTL_BOUNDS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "gtl/approximator.hpp"
#include "gtl/collocation.hpp"
#include "gtl/common.hpp"
#include "gtl/systems.hpp"
#include "gtl/taskspace.hpp"

namespace gtl {

/// Task -> (X, T) map whose constants are estimated; usually the trained approximator.
using TrajectoryMap = std::function<Prediction(const Task&)>;

inline TrajectoryMap approximator_map(const ApproximatorWeights& w) {
  auto net = std::make_shared<Network>(w.config);
  auto params = std::make_shared<Vec>(w.params);
  return [net, params](const Task& t) { return net->forward(*params, t); };
}

struct McEstimate {
  double integral = 0.0;  // I_N = V/N sum f
  double var_est = 0.0;   // V^2 Var(f) / N
  double mean_f = 0.0;
  double var_f = 0.0;     // 1/(N-1) sum (f - mean)^2
  std::size_t n = 0;
};

/// Monte-Carlo integral of f over the task box from n uniform samples.
template <class F>
McEstimate mc_cost_integral(F&& f, const TaskSpace& space, std::size_t n, std::uint64_t seed) {
  require(n >= 2, "mc_cost_integral needs n >= 2");
  const TaskSet ts = sample_uniform(space, n, seed);
  std::vector<double> v(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = f(ts[i]);
    sum += v[i];
  }
  McEstimate e;
  e.n = n;
  e.mean_f = sum / n;
  double ss = 0.0;
  for (double x : v) ss += (x - e.mean_f) * (x - e.mean_f);
  e.var_f = ss / (n - 1);
  const double V = space.volume();
  e.integral = V * e.mean_f;
  e.var_est = V * V * e.var_f / n;
  return e;
}

/// Controls minimizing the dynamics defects of fixed (X, T). Exact when f is affine in u.
inline Mat least_squares_controls(const SystemSpec& spec, const Task& task, const Mat& states,
                                  double duration) {
  const int L = static_cast<int>(states.rows()), p = spec.state_dim, q = spec.control_dim;
  const NlpInstance nlp = transcribe(spec, task, L);
  Trajectory tr{states, Mat::Zero(L, q), duration};
  Vec z = nlp.pack(tr);
  const int rows = (L - 1) * p;
  for (int pass = 0; pass < 2; ++pass) {
    const Vec c = nlp.eq_residuals(z).head(rows);
    const Mat J = Mat(nlp.eq_jacobian(z)).block(0, nlp.u_index(0), rows, L * q);
    const Vec du = J.completeOrthogonalDecomposition().solve(-c);
    z.segment(nlp.u_index(0), L * q) += du;
  }
  return nlp.unpack(z).controls;
}

inline Trajectory completed_trajectory(const SystemSpec& spec, const Task& task,
                                       const Prediction& pr) {
  return Trajectory{pr.states, least_squares_controls(spec, task, pr.states, pr.duration),
                    pr.duration};
}

/// Constraint groups with their residual vectors; inequalities are reported as max(0, c).
struct ConstraintGroups {
  std::vector<std::string> names;
  std::vector<Vec> residuals;
};

inline ConstraintGroups constraint_groups(const SystemSpec& spec, const Task& task,
                                          const Trajectory& tr) {
  const int L = tr.nodes(), p = spec.state_dim;
  const NlpInstance nlp = transcribe(spec, task, L);
  const Vec z = nlp.pack(tr);
  const Vec eq = nlp.eq_residuals(z);
  ConstraintGroups g;
  g.names.push_back("dynamics");
  g.residuals.push_back(eq.head((L - 1) * p));
  if (spec.n_terminal > 0) {
    g.names.push_back("terminal");
    g.residuals.push_back(eq.segment((L - 1) * p, spec.n_terminal));
  }
  if (spec.n_path_eq > 0) {
    g.names.push_back("path_eq");
    g.residuals.push_back(eq.tail(L * spec.n_path_eq));
  }
  if (spec.n_path_ineq > 0) {
    g.names.push_back("path_ineq");
    g.residuals.push_back(nlp.ineq_residuals(z).cwiseMax(0.0));
  }
  return g;
}

struct LipschitzProbeConfig {
  std::string method = "finite_difference";  // or "pairwise"
  int grid_n = 21;                           // per axis, finite_difference
  int pairs = 2000;                          // pairwise
  int constraint_probes = 11;                // points where constraint Jacobians are taken
  std::uint64_t seed = 0;
  // Local variant: only probes within local_radius of local_center.
  Vec local_center;
  double local_radius = kInf;
};

/// K and L_dur are difference-quotient maxima with |X - X'|_inf / |tau - tau'|_2; m_i is the
/// max row l1-norm of the constraint Jacobian w.r.t. z = (tau, X, T) with controls eliminated.
struct LipschitzEstimates {
  double K = 0.0;
  double L_dur = 0.0;
  std::vector<double> m;
  std::vector<std::string> constraint_names;
  double K_local = 0.0;
  double L_dur_local = 0.0;
  std::vector<double> m_local;
  std::string method;
  int pairs_used = 0;
};

namespace detail {

inline std::vector<Task> grid_tasks(const TaskSpace& space, int n) {
  require(n >= 2, "grid needs at least 2 points per axis");
  const int m = space.dims();
  std::size_t total = 1;
  for (int j = 0; j < m; ++j) total *= n;
  std::vector<Task> out;
  out.reserve(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    Vec c(m);
    std::size_t r = idx;
    for (int j = 0; j < m; ++j) {
      const int k = static_cast<int>(r % n);
      r /= n;
      c[j] = space.lower()[j] + (space.upper()[j] - space.lower()[j]) * k / (n - 1);
    }
    out.push_back(Task{std::move(c)});
  }
  return out;
}

inline bool within(const Task& t, const LipschitzProbeConfig& cfg) {
  if (cfg.local_center.size() == 0 || std::isinf(cfg.local_radius)) return true;
  return (t.coords - cfg.local_center).norm() <= cfg.local_radius;
}

// Jacobian of every group w.r.t. z = (tau, vec(X), T) by central differences; returns the max
// row l1-norm per group.
inline std::vector<double> constraint_sensitivity(const SystemSpec& spec, const Task& task,
                                                  const Prediction& pr) {
  const int L = static_cast<int>(pr.states.rows()), p = static_cast<int>(pr.states.cols());
  const int m = task.dims();
  const int nz = m + L * p + 1;
  auto eval = [&](const Vec& z) {
    Task t{z.head(m)};
    Prediction q;
    q.states = unflatten_rows(z.segment(m, L * p), L, p);
    q.duration = z[nz - 1];
    const Trajectory tr = completed_trajectory(spec, t, q);
    // signed residuals keep the map differentiable away from the kinks of max(0, .)
    const NlpInstance nlp = transcribe(spec, t, L);
    const Vec zz = nlp.pack(tr);
    Vec eq = nlp.eq_residuals(zz), in = nlp.ineq_residuals(zz);
    Vec all(eq.size() + in.size());
    all << eq, in;
    return all;
  };
  Vec z0(nz);
  z0 << task.coords, flatten_rows(pr.states), pr.duration;
  const Vec c0 = eval(z0);
  Mat J(c0.size(), nz);
  for (int j = 0; j < nz; ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(z0[j]));
    Vec zp = z0, zm = z0;
    zp[j] += h;
    zm[j] -= h;
    J.col(j) = (eval(zp) - eval(zm)) / (2.0 * h);
  }
  const ConstraintGroups names = constraint_groups(spec, task, Trajectory{pr.states,
                                                   Mat::Zero(L, spec.control_dim), pr.duration});
  std::vector<double> out;
  int row = 0;
  for (const Vec& r : names.residuals) {
    const int n = static_cast<int>(r.size());
    out.push_back(J.middleRows(row, n).rowwise().lpNorm<1>().maxCoeff());
    row += n;
  }
  return out;
}

}  // namespace detail

inline LipschitzEstimates estimate_lipschitz(const TrajectoryMap& map, const SystemSpec& spec,
                                             const TaskSpace& space,
                                             const LipschitzProbeConfig& cfg) {
  require(cfg.method == "finite_difference" || cfg.method == "pairwise",
          "lipschitz method must be finite_difference or pairwise", "invalid_config");
  LipschitzEstimates est;
  est.method = cfg.method;

  std::vector<Task> pts;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (cfg.method == "finite_difference") {
    pts = detail::grid_tasks(space, cfg.grid_n);
    const int m = space.dims();
    std::size_t stride = 1;
    for (int j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const std::size_t k = (i / stride) % cfg.grid_n;
        if (k + 1 < static_cast<std::size_t>(cfg.grid_n)) pairs.emplace_back(i, i + stride);
      }
      stride *= cfg.grid_n;
    }
  } else {
    const TaskSet ts = sample_uniform(space, 2 * static_cast<std::size_t>(cfg.pairs), cfg.seed);
    pts = ts.tasks;
    for (int i = 0; i < cfg.pairs; ++i) pairs.emplace_back(2 * i, 2 * i + 1);
  }
  std::vector<Prediction> preds;
  preds.reserve(pts.size());
  for (const Task& t : pts) preds.push_back(map(t));

  for (const auto& [a, b] : pairs) {
    const double dt = (pts[a].coords - pts[b].coords).norm();
    if (dt == 0.0) continue;  // degenerate pair
    ++est.pairs_used;
    const double kq = (preds[a].states - preds[b].states).lpNorm<Eigen::Infinity>() / dt;
    const double lq = std::abs(preds[a].duration - preds[b].duration) / dt;
    est.K = std::max(est.K, kq);
    est.L_dur = std::max(est.L_dur, lq);
    if (detail::within(pts[a], cfg) && detail::within(pts[b], cfg)) {
      est.K_local = std::max(est.K_local, kq);
      est.L_dur_local = std::max(est.L_dur_local, lq);
    }
  }

  // constraint constants on an evenly spaced subset of the probes
  const std::size_t stride =
      std::max<std::size_t>(1, pts.size() / std::max(1, cfg.constraint_probes));
  for (std::size_t i = 0; i < pts.size(); i += stride) {
    const std::vector<double> mi = detail::constraint_sensitivity(spec, pts[i], preds[i]);
    if (est.m.empty()) {
      est.m.assign(mi.size(), 0.0);
      est.m_local.assign(mi.size(), 0.0);
    }
    for (std::size_t g = 0; g < mi.size(); ++g) {
      est.m[g] = std::max(est.m[g], mi[g]);
      if (detail::within(pts[i], cfg)) est.m_local[g] = std::max(est.m_local[g], mi[g]);
    }
  }
  est.constraint_names =
      constraint_groups(spec, pts[0], Trajectory{preds[0].states,
                                                 Mat::Zero(preds[0].states.rows(), spec.control_dim),
                                                 preds[0].duration})
          .names;
  return est;
}

struct ViolationBound {
  std::vector<std::string> names;
  std::vector<double> bound;
  double eps = 0.0;
  bool local = false;
};

/// m_i (1 + K + L_dur) eps per constraint group.
inline ViolationBound violation_bound(const LipschitzEstimates& lip, double eps, bool local) {
  require(eps >= 0.0, "violation_bound needs eps >= 0");
  ViolationBound vb;
  vb.names = lip.constraint_names;
  vb.eps = eps;
  vb.local = local;
  const double K = local ? lip.K_local : lip.K;
  const double Ld = local ? lip.L_dur_local : lip.L_dur;
  for (double mi : local ? lip.m_local : lip.m) vb.bound.push_back(mi * (1.0 + K + Ld) * eps);
  return vb;
}

struct ViolationProfile {
  std::vector<std::string> names;
  std::vector<double> max_violation;           // per group
  std::vector<Task> tasks;                     // grid tasks
  std::vector<std::vector<double>> per_task;   // [task][group]
};

/// Per-group max |residual| of the completed predicted trajectories on a grid_n^m grid.
inline ViolationProfile violation_measured(const TrajectoryMap& map, const SystemSpec& spec,
                                           const TaskSpace& space, int grid_n) {
  require(grid_n >= 2, "violation_measured needs grid_n >= 2");
  ViolationProfile prof;
  prof.tasks = detail::grid_tasks(space, grid_n);
  for (const Task& t : prof.tasks) {
    const Trajectory tr = completed_trajectory(spec, t, map(t));
    const ConstraintGroups g = constraint_groups(spec, t, tr);
    if (prof.names.empty()) {
      prof.names = g.names;
      prof.max_violation.assign(g.names.size(), 0.0);
    }
    std::vector<double> row;
    for (std::size_t k = 0; k < g.residuals.size(); ++k) {
      const double v = g.residuals[k].size() ? g.residuals[k].lpNorm<Eigen::Infinity>() : 0.0;
      row.push_back(v);
      prof.max_violation[k] = std::max(prof.max_violation[k], v);
    }
    prof.per_task.push_back(std::move(row));
  }
  return prof;
}

}  // namespace gtl

#endif  // GTL_BOUNDS_HPP_
