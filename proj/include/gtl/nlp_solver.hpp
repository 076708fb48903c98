#ifndef GTL_NLP_SOLVER_HPP_
#define GTL_NLP_SOLVER_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/SparseCholesky>

#include "gtl/collocation.hpp"
#include "gtl/common.hpp"

namespace gtl {

/// Backtracking parameters of the projected line search.
struct LineSearchConfig {
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 40;
};

struct SolverConfig {
  int max_outer = 40;
  int max_inner = 100;
  double penalty_init = 100.0;
  double penalty_growth = 10.0;
  double penalty_max = 1e10;
  double feas_tol = 1e-6;
  double opt_tol = 1e-5;
  double mult_tol = 1e-4;  // |y_{j+1} - y_j|_inf required at convergence
  LineSearchConfig inner_step;

  void validate() const {
    require(max_outer >= 1 && max_inner >= 1, "solver iteration budgets must be >= 1",
            "invalid_config");
    require(penalty_init > 0.0, "penalty_init must be > 0", "invalid_config");
    require(penalty_growth > 1.0, "penalty_growth must be > 1", "invalid_config");
    require(penalty_max >= penalty_init, "penalty_max must be >= penalty_init", "invalid_config");
    require(feas_tol > 0.0 && opt_tol > 0.0 && mult_tol > 0.0, "solver tolerances must be > 0", "invalid_config");
    require(inner_step.armijo > 0.0 && inner_step.armijo < 1.0, "armijo constant must be in (0,1)",
            "invalid_config");
    require(inner_step.backtrack > 0.0 && inner_step.backtrack < 1.0,
            "backtrack factor must be in (0,1)", "invalid_config");
  }
};

enum class SolveStatus { converged, max_iter, infeasible_point };

inline std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::infeasible_point: return "infeasible_point";
  }
  return "unknown";
}

struct SolveReport {
  Vec solution;
  double objective = 0.0;
  double feas_residual = 0.0;  // max(|c_eq|_inf, |max(0, c_in)|_inf)
  double stationarity = 0.0;   // |P(z - grad Lag) - z|_inf
  SolveStatus status = SolveStatus::max_iter;
  int inner_iterations = 0;
  int outer_iterations = 0;
  Vec eq_multipliers;
  Vec ineq_multipliers;
  std::vector<double> feas_history;        // one entry per outer iteration
  std::vector<double> multiplier_deltas;   // |y_{j+1} - y_j|_inf per outer iteration
};

/// Interface the solver needs; NlpInstance models it, tests use small hand-written problems.
template <class P>
concept NlpProblem = requires(const P& p, const Vec& z, Vec* g) {
  { p.num_vars() } -> std::convertible_to<int>;
  { p.objective(z, g) } -> std::convertible_to<double>;
  { p.eq_residuals(z) } -> std::convertible_to<Vec>;
  { p.ineq_residuals(z) } -> std::convertible_to<Vec>;
  { p.eq_jacobian(z) } -> std::convertible_to<SparseMat>;
  { p.ineq_jacobian(z) } -> std::convertible_to<SparseMat>;
  { p.lagrangian_hessian(z, z, z) } -> std::convertible_to<SparseMat>;
  { p.lower_bounds() } -> std::convertible_to<Vec>;
  { p.upper_bounds() } -> std::convertible_to<Vec>;
};

namespace detail {

inline Vec project(const Vec& z, const Vec& lo, const Vec& hi) {
  return z.cwiseMax(lo).cwiseMin(hi);
}

inline double projected_gradient_norm(const Vec& z, const Vec& g, const Vec& lo, const Vec& hi) {
  if (z.size() == 0) return 0.0;
  return (project(z - g, lo, hi) - z).lpNorm<Eigen::Infinity>();
}

inline double feasibility(const Vec& c, const Vec& g) {
  double f = c.size() ? c.lpNorm<Eigen::Infinity>() : 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i) f = std::max(f, g[i]);
  return f;
}

// Augmented Lagrangian with PHR squashing for inequalities.
template <NlpProblem P>
struct AugLag {
  const P& nlp;
  const Vec& y;
  const Vec& nu;
  double mu;

  double value(const Vec& z) const {
    double v = nlp.objective(z, nullptr);
    const Vec c = nlp.eq_residuals(z);
    v += y.dot(c) + 0.5 * mu * c.squaredNorm();
    const Vec g = nlp.ineq_residuals(z);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double s = std::max(0.0, nu[i] + mu * g[i]);
      v += (s * s - nu[i] * nu[i]) / (2.0 * mu);
    }
    return v;
  }

  // Gradient plus the shifted multipliers (y + mu c, max(0, nu + mu g)) at z.
  Vec gradient(const Vec& z, Vec* y_shift, Vec* nu_shift, SparseMat* Jc, SparseMat* Jg) const {
    Vec grad;
    nlp.objective(z, &grad);
    const Vec c = nlp.eq_residuals(z);
    *y_shift = y + mu * c;
    *Jc = nlp.eq_jacobian(z);
    if (c.size()) grad += Jc->transpose() * (*y_shift);
    const Vec g = nlp.ineq_residuals(z);
    *nu_shift = (nu + mu * g).cwiseMax(0.0);
    *Jg = nlp.ineq_jacobian(z);
    if (g.size()) grad += Jg->transpose() * (*nu_shift);
    return grad;
  }
};

struct InnerResult {
  Vec z;
  int iterations = 0;
  double pg_norm = kInf;
};

// Projected damped Newton on the augmented Lagrangian with bound constraints.
template <NlpProblem P>
InnerResult minimize_inner(const P& nlp, Vec z, const Vec& y, const Vec& nu, double mu,
                           const SolverConfig& cfg) {
  const Vec lo = nlp.lower_bounds(), hi = nlp.upper_bounds();
  const Eigen::Index n = z.size();
  AugLag<P> al{nlp, y, nu, mu};
  InnerResult res;
  double phi = al.value(z);
  double delta = 0.0;
  Eigen::SimplicialLDLT<SparseMat> ldlt;
  for (int it = 0; it < cfg.max_inner; ++it) {
    Vec ys, ns;
    SparseMat Jc, Jg;
    const Vec grad = al.gradient(z, &ys, &ns, &Jc, &Jg);
    res.pg_norm = projected_gradient_norm(z, grad, lo, hi);
    // solved past opt_tol so mu * |c| can reach mult_tol without the outer loop stalling
    if (!std::isfinite(res.pg_norm) || res.pg_norm <= 1e-2 * cfg.opt_tol) break;
    res.iterations = it + 1;

    // variables held at their bound this step
    std::vector<char> active(n, 0);
    const double eps_b = std::min(1e-10, 0.5 * res.pg_norm);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (lo[i] == hi[i]) active[i] = 1;
      else if (z[i] <= lo[i] + eps_b && grad[i] > 0.0) active[i] = 1;
      else if (z[i] >= hi[i] - eps_b && grad[i] < 0.0) active[i] = 1;
    }

    SparseMat H = nlp.lagrangian_hessian(z, ys, ns);
    if (Jc.rows()) H += mu * SparseMat(Jc.transpose() * Jc);
    if (Jg.rows()) {
      SparseMat Ja = Jg;
      for (int k = 0; k < Ja.outerSize(); ++k)
        for (SparseMat::InnerIterator itj(Ja, k); itj; ++itj)
          if (ns[itj.row()] <= 0.0) itj.valueRef() = 0.0;
      H += mu * SparseMat(Ja.transpose() * Ja);
    }
    std::vector<Triplet> trip;
    trip.reserve(H.nonZeros() + n);
    for (int k = 0; k < H.outerSize(); ++k)
      for (SparseMat::InnerIterator itj(H, k); itj; ++itj)
        if (!active[itj.row()] && !active[itj.col()])
          trip.emplace_back(itj.row(), itj.col(), itj.value());
    double diag_scale = 1.0;
    for (int k = 0; k < H.outerSize(); ++k)
      diag_scale = std::max(diag_scale, std::abs(H.coeff(k, k)));
    Vec rhs = -grad;
    for (Eigen::Index i = 0; i < n; ++i)
      if (active[i]) rhs[i] = 0.0;

    Vec d;
    bool have_dir = false;
    for (int attempt = 0; attempt < 30; ++attempt) {
      std::vector<Triplet> t2 = trip;
      for (Eigen::Index i = 0; i < n; ++i) t2.emplace_back(i, i, active[i] ? 1.0 : delta);
      SparseMat K(n, n);
      K.setFromTriplets(t2.begin(), t2.end());
      ldlt.compute(K);
      const bool pd = ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all();
      if (pd) {
        d = ldlt.solve(rhs);
        if (d.allFinite() && grad.dot(d) < 0.0) {
          have_dir = true;
          break;
        }
      }
      delta = delta == 0.0 ? 1e-8 * diag_scale : delta * 10.0;
    }
    if (!have_dir) d = rhs;

    auto search = [&](const Vec& dir, Vec* z_new, double* phi_new) {
      double a = 1.0;
      for (int b = 0; b < cfg.inner_step.max_backtracks; ++b) {
        const Vec trial = project(z + a * dir, lo, hi);
        const double v = al.value(trial);
        if (std::isfinite(v) && v <= phi + cfg.inner_step.armijo * grad.dot(trial - z)) {
          *z_new = trial;
          *phi_new = v;
          return true;
        }
        a *= cfg.inner_step.backtrack;
      }
      return false;
    };
    Vec z_new;
    double phi_new = phi;
    bool ok = search(d, &z_new, &phi_new);
    if (!ok && have_dir) ok = search(rhs, &z_new, &phi_new);
    if (!ok) break;  // stalled
    if ((z_new - z).lpNorm<Eigen::Infinity>() <= 1e-14 * std::max(1.0, z.lpNorm<Eigen::Infinity>()))
      break;  // at the rounding floor of z
    z = std::move(z_new);
    phi = phi_new;
    delta *= 0.1;
    if (delta < 1e-14 * diag_scale) delta = 0.0;
  }
  res.z = std::move(z);
  return res;
}

}  // namespace detail

/// Augmented-Lagrangian outer loop around a projected Newton inner solver.
template <NlpProblem P>
SolveReport solve(const P& nlp, const std::optional<Vec>& warm_start, const SolverConfig& cfg) {
  cfg.validate();
  const Vec lo = nlp.lower_bounds(), hi = nlp.upper_bounds();
  const int n = nlp.num_vars();
  Vec z;
  if (warm_start) {
    require(warm_start->size() == n, "warm start length does not match the NLP");
    z = detail::project(*warm_start, lo, hi);
  } else {
    z = detail::project(Vec::Zero(n), lo, hi);
  }
  Vec y = Vec::Zero(nlp.eq_residuals(z).size());
  Vec nu = Vec::Zero(nlp.ineq_residuals(z).size());
  double mu = cfg.penalty_init;

  SolveReport rep;
  double prev_feas = kInf;
  for (int outer = 0; outer < cfg.max_outer; ++outer) {
    const detail::InnerResult in = detail::minimize_inner(nlp, z, y, nu, mu, cfg);
    z = in.z;
    rep.inner_iterations += in.iterations;
    rep.outer_iterations = outer + 1;

    const Vec c = nlp.eq_residuals(z);
    const Vec g = nlp.ineq_residuals(z);
    const double feas = detail::feasibility(c, g);
    const Vec y_next = y + mu * c;
    const Vec nu_next = (nu + mu * g).cwiseMax(0.0);
    double dmult = 0.0;
    if (y.size()) dmult = (y_next - y).lpNorm<Eigen::Infinity>();
    if (nu.size()) dmult = std::max(dmult, (nu_next - nu).lpNorm<Eigen::Infinity>());
    y = y_next;
    nu = nu_next;
    rep.feas_history.push_back(feas);
    rep.multiplier_deltas.push_back(dmult);
    rep.stationarity = in.pg_norm;
    rep.feas_residual = feas;

    if (!std::isfinite(feas)) {
      rep.status = SolveStatus::infeasible_point;
      break;
    }
    if (feas <= cfg.feas_tol && in.pg_norm <= cfg.opt_tol && dmult <= cfg.mult_tol) {
      rep.status = SolveStatus::converged;
      break;
    }
    if (feas > cfg.feas_tol && feas > 0.25 * prev_feas) {
      if (mu >= cfg.penalty_max) {
        rep.status = SolveStatus::infeasible_point;
        break;
      }
      mu = std::min(cfg.penalty_max, mu * cfg.penalty_growth);
    }
    prev_feas = feas;
  }
  rep.solution = z;
  rep.objective = nlp.objective(z, nullptr);
  rep.eq_multipliers = y;
  rep.ineq_multipliers = nu;
  return rep;
}

namespace detail {

// Runs fn(i) for i in [0, n) on `workers` threads; results must be written by index.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const int w = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (w == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < w; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

/// Solves every element on a worker pool; element i depends only on (nlps[i], warm_starts[i]).
template <NlpProblem P>
std::vector<SolveReport> solve_batch(const std::vector<P>& nlps,
                                     const std::vector<std::optional<Vec>>& warm_starts,
                                     const SolverConfig& cfg, int workers = 1) {
  require(nlps.size() == warm_starts.size(), "solve_batch lists must be aligned");
  cfg.validate();
  std::vector<SolveReport> out(nlps.size());
  detail::parallel_for(nlps.size(), workers,
                       [&](std::size_t i) { out[i] = solve(nlps[i], warm_starts[i], cfg); });
  return out;
}

/// Ranks reports: converged first, then lower objective, then lower infeasibility.
inline bool better_report(const SolveReport& a, const SolveReport& b) {
  const bool ca = a.status == SolveStatus::converged, cb = b.status == SolveStatus::converged;
  if (ca != cb) return ca;
  if (ca) return a.objective < b.objective;
  return a.feas_residual < b.feas_residual;
}

/// Prox-free solve of one task from each of the system's initial guesses; keeps the best.
inline SolveReport solve_original(const SystemSpec& spec, const Task& task, int nodes,
                                  const SolverConfig& cfg) {
  const NlpInstance nlp = transcribe(spec, task, nodes);
  std::optional<SolveReport> best;
  for (const Trajectory& guess : spec.initial_guesses(task, nodes)) {
    SolveReport r = solve(nlp, std::optional<Vec>(nlp.pack(guess)), cfg);
    if (!best || better_report(r, *best)) best = std::move(r);
  }
  require(best.has_value(), "system produced no initial guess");
  return *best;
}

inline std::vector<SolveReport> solve_original_batch(const SystemSpec& spec, const TaskSet& tasks,
                                                     int nodes, const SolverConfig& cfg,
                                                     int workers = 1) {
  std::vector<SolveReport> out(tasks.size());
  detail::parallel_for(tasks.size(), workers, [&](std::size_t i) {
    out[i] = solve_original(spec, tasks[i], nodes, cfg);
  });
  return out;
}

}  // namespace gtl

#endif  // GTL_NLP_SOLVER_HPP_
