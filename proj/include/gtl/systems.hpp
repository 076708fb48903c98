#ifndef GTL_SYSTEMS_HPP_
#define GTL_SYSTEMS_HPP_

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gtl/common.hpp"
#include "gtl/taskspace.hpp"
#include "gtl/trajectory.hpp"

namespace gtl {

/// Residual value with its dense Jacobian; column layout is documented per function.
struct Residual {
  Vec value;
  Mat jac;
};

/// Task-parameterized, time-invariant dynamical system with running cost and constraints.
struct SystemSpec {
  std::string name;
  int state_dim = 0;
  int control_dim = 0;
  int task_dim = 0;

  // xdot = f(x, u); jac columns [x, u]
  std::function<Residual(const Vec& x, const Vec& u)> dynamics;
  // l(tau, x, u, T); gradient layout [x, u, T]
  std::function<double(const Task&, const Vec& x, const Vec& u, double T, Vec* grad)>
      running_cost;
  // c_T(tau, x0, u0, xT, uT, T) = 0; jac columns [x0, u0, xT, uT, T]
  std::function<Residual(const Task&, const Vec& x0, const Vec& u0, const Vec& xT,
                         const Vec& uT, double T)>
      terminal_constraint;
  int n_terminal = 0;
  // c_in(tau, x, u, t) <= 0 and c_eq(tau, x, u, t) = 0; jac columns [x, u, t]
  std::function<Residual(const Task&, const Vec& x, const Vec& u, double t)> path_ineq;
  int n_path_ineq = 0;
  std::function<Residual(const Task&, const Vec& x, const Vec& u, double t)> path_eq;
  int n_path_eq = 0;

  Box state_bounds;
  Box control_bounds;
  std::function<Interval(const Task&)> duration_bounds;
  // Warm starts for a prox-free solve; several entries seed distinct local basins.
  std::function<std::vector<Trajectory>(const Task&, int nodes)> initial_guesses;
  // "task" when the task pins T, "box" when T is optimized inside D_T.
  std::string duration_mode = "box";
};

/// Closed-form solution used as ground truth.
struct OracleSolution {
  std::function<Vec(double)> state_fn;
  std::function<Vec(double)> control_fn;
  double duration = 0.0;
  double cost = 0.0;

  Trajectory sample(int nodes) const {
    Trajectory tr;
    const Vec x0 = state_fn(0.0);
    const Vec u0 = control_fn(0.0);
    tr.states.resize(nodes, x0.size());
    tr.controls.resize(nodes, u0.size());
    tr.duration = duration;
    for (int k = 0; k < nodes; ++k) {
      const double t = duration * k / (nodes - 1);
      tr.states.row(k) = state_fn(t).transpose();
      tr.controls.row(k) = control_fn(t).transpose();
    }
    return tr;
  }
};

namespace detail {

// x(0) = start, x(T) = goal, full-state boundary conditions.
inline Residual boundary_residual(const Vec& x0, const Vec& xT, const Vec& start, const Vec& goal,
                                  int q) {
  const int p = static_cast<int>(x0.size());
  Residual r;
  r.value.resize(2 * p);
  r.value.head(p) = x0 - start;
  r.value.tail(p) = xT - goal;
  r.jac = Mat::Zero(2 * p, 2 * p + 2 * q + 1);
  r.jac.block(0, 0, p, p).setIdentity();
  r.jac.block(p, p + q, p, p).setIdentity();
  return r;
}

inline double control_energy(const Vec& x, const Vec& u, Vec* grad) {
  if (grad) {
    grad->setZero(x.size() + u.size() + 1);
    grad->segment(x.size(), u.size()) = 2.0 * u;
  }
  return u.squaredNorm();
}

inline Trajectory linear_guess(const Vec& start, const Vec& goal, int q, double T, int nodes) {
  Trajectory tr;
  tr.states.resize(nodes, start.size());
  tr.controls = Mat::Zero(nodes, q);
  tr.duration = T;
  for (int k = 0; k < nodes; ++k) {
    const double s = static_cast<double>(k) / (nodes - 1);
    tr.states.row(k) = ((1.0 - s) * start + s * goal).transpose();
  }
  return tr;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Double integrator

struct DoubleIntegratorParams {
  // Duration box used when the task does not pin T.
  Interval duration{1.0, 1.0};
};

/// x = (position, velocity), u = acceleration, l = u^2. Task (d) or (d, T_des).
inline SystemSpec double_integrator_spec(const TaskSpace& space,
                                         DoubleIntegratorParams params = {}) {
  require(space.dims() == 1 || space.dims() == 2,
          "double integrator task space must be (d) or (d, T_des)");
  require(params.duration.lower > 0.0 && params.duration.lower <= params.duration.upper,
          "double integrator duration box must be positive and ordered");
  SystemSpec s;
  s.name = "double_integrator";
  s.state_dim = 2;
  s.control_dim = 1;
  s.task_dim = space.dims();
  s.dynamics = [](const Vec& x, const Vec& u) {
    Residual r;
    r.value = Vec(2);
    r.value << x[1], u[0];
    r.jac = Mat::Zero(2, 3);
    r.jac(0, 1) = 1.0;
    r.jac(1, 2) = 1.0;
    return r;
  };
  s.running_cost = [](const Task&, const Vec& x, const Vec& u, double, Vec* g) {
    return detail::control_energy(x, u, g);
  };
  s.terminal_constraint = [](const Task& task, const Vec& x0, const Vec&, const Vec& xT,
                             const Vec&, double) {
    Vec goal(2);
    goal << task[0], 0.0;
    return detail::boundary_residual(x0, xT, Vec::Zero(2), goal, 1);
  };
  s.n_terminal = 4;
  s.state_bounds = Box::unbounded(2);
  s.control_bounds = Box::unbounded(1);
  const bool pinned = space.dims() == 2;
  s.duration_mode = pinned ? "task" : "box";
  s.duration_bounds = [pinned, params](const Task& task) {
    if (pinned) return Interval{task[1], task[1]};
    return params.duration;
  };
  s.initial_guesses = [pinned, params](const Task& task, int nodes) {
    const double T = pinned ? task[1] : params.duration.midpoint();
    Vec goal(2);
    goal << task[0], 0.0;
    return std::vector<Trajectory>{detail::linear_guess(Vec::Zero(2), goal, 1, T, nodes)};
  };
  return s;
}

/// Minimum-energy rest-to-rest solution: x = d(3s^2 - 2s^3), u = (6d/T^2)(1 - 2t/T).
inline OracleSolution double_integrator_oracle(double d, double T) {
  require(T > 0.0, "double_integrator_oracle needs T > 0", "invalid_argument");
  OracleSolution o;
  o.duration = T;
  o.cost = 12.0 * d * d / (T * T * T);
  o.state_fn = [d, T](double t) {
    const double s = t / T;
    Vec x(2);
    x << d * (3.0 * s * s - 2.0 * s * s * s), d * (6.0 * s - 6.0 * s * s) / T;
    return x;
  };
  o.control_fn = [d, T](double t) {
    Vec u(1);
    u << 6.0 * d / (T * T) * (1.0 - 2.0 * t / T);
    return u;
  };
  return o;
}

// ---------------------------------------------------------------------------
// Pendulum

struct PendulumParams {
  double inertia = 1.0;
  double gravity = 1.0;  // torque coefficient c in I * wdot = u - c sin(theta)
  double max_torque = 5.0;
};

/// x = (theta, omega); swing from rest at theta = 0 to rest at theta_goal in T_des.
inline SystemSpec pendulum_spec(const TaskSpace& space, PendulumParams params = {}) {
  require(space.dims() == 2, "pendulum task space must be (theta_goal, T_des)");
  require(params.inertia > 0.0, "pendulum inertia must be positive");
  require(params.max_torque > 0.0, "pendulum torque limit must be positive");
  SystemSpec s;
  s.name = "pendulum";
  s.state_dim = 2;
  s.control_dim = 1;
  s.task_dim = 2;
  const double I = params.inertia, c = params.gravity;
  s.dynamics = [I, c](const Vec& x, const Vec& u) {
    Residual r;
    r.value = Vec(2);
    r.value << x[1], (u[0] - c * std::sin(x[0])) / I;
    r.jac = Mat::Zero(2, 3);
    r.jac(0, 1) = 1.0;
    r.jac(1, 0) = -c * std::cos(x[0]) / I;
    r.jac(1, 2) = 1.0 / I;
    return r;
  };
  s.running_cost = [](const Task&, const Vec& x, const Vec& u, double, Vec* g) {
    return detail::control_energy(x, u, g);
  };
  s.terminal_constraint = [](const Task& task, const Vec& x0, const Vec&, const Vec& xT,
                             const Vec&, double) {
    Vec goal(2);
    goal << task[0], 0.0;
    return detail::boundary_residual(x0, xT, Vec::Zero(2), goal, 1);
  };
  s.n_terminal = 4;
  s.state_bounds = Box::unbounded(2);
  s.control_bounds = Box{Vec::Constant(1, -params.max_torque), Vec::Constant(1, params.max_torque)};
  s.duration_mode = "task";
  s.duration_bounds = [](const Task& task) { return Interval{task[1], task[1]}; };
  s.initial_guesses = [](const Task& task, int nodes) {
    Vec goal(2);
    goal << task[0], 0.0;
    Trajectory tr = detail::linear_guess(Vec::Zero(2), goal, 1, task[1], nodes);
    tr.states.col(1).setConstant(task[0] / task[1]);
    return std::vector<Trajectory>{tr};
  };
  return s;
}

// ---------------------------------------------------------------------------
// Discontinuous family: planar double integrator past a soft obstacle

struct ObstacleParams {
  double duration = 2.0;
  double weight = 20.0;       // A
  double sigma_x = 0.1;
  double sigma_y = 0.2;
  double offset_scale = 0.3;  // obstacle centre y = -offset_scale * tau
  double obstacle_x = 0.5;
  double goal_x = 1.0;
  double guess_detour = 0.3;  // lateral amplitude of the above/below warm starts
};

/// x = (px, py, vx, vy), u = (ax, ay), l = |u|^2 + A exp(-dx^2/2sx^2 - dy^2/2sy^2).
///
/// The obstacle centre sits at y = -s tau, so for tau < 0 the cheaper detour passes below and
/// for tau > 0 above; at tau = 0 the two detours cost the same and the optimum jumps.
inline SystemSpec discontinuous_family_spec(const TaskSpace& space, ObstacleParams params = {}) {
  require(space.dims() == 1, "discontinuous family task space must be 1-D");
  require(params.duration > 0.0 && params.sigma_x > 0.0 && params.sigma_y > 0.0,
          "obstacle parameters must be positive");
  SystemSpec s;
  s.name = "discontinuous_family";
  s.state_dim = 4;
  s.control_dim = 2;
  s.task_dim = 1;
  s.dynamics = [](const Vec& x, const Vec& u) {
    Residual r;
    r.value = Vec(4);
    r.value << x[2], x[3], u[0], u[1];
    r.jac = Mat::Zero(4, 6);
    r.jac(0, 2) = 1.0;
    r.jac(1, 3) = 1.0;
    r.jac(2, 4) = 1.0;
    r.jac(3, 5) = 1.0;
    return r;
  };
  s.running_cost = [params](const Task& task, const Vec& x, const Vec& u, double, Vec* g) {
    const double dx = x[0] - params.obstacle_x;
    const double dy = x[1] + params.offset_scale * task[0];
    const double sx2 = params.sigma_x * params.sigma_x, sy2 = params.sigma_y * params.sigma_y;
    const double bump = params.weight * std::exp(-0.5 * (dx * dx / sx2 + dy * dy / sy2));
    const double value = detail::control_energy(x, u, g) + bump;
    if (g) {
      (*g)[0] = -bump * dx / sx2;
      (*g)[1] = -bump * dy / sy2;
    }
    return value;
  };
  s.terminal_constraint = [params](const Task&, const Vec& x0, const Vec&, const Vec& xT,
                                   const Vec&, double) {
    Vec goal = Vec::Zero(4);
    goal[0] = params.goal_x;
    return detail::boundary_residual(x0, xT, Vec::Zero(4), goal, 2);
  };
  s.n_terminal = 8;
  s.state_bounds = Box::unbounded(4);
  s.control_bounds = Box::unbounded(2);
  s.duration_mode = "task";
  s.duration_bounds = [params](const Task&) { return Interval{params.duration, params.duration}; };
  s.initial_guesses = [params](const Task&, int nodes) {
    std::vector<Trajectory> out;
    for (double sign : {1.0, -1.0}) {
      Trajectory tr;
      tr.states = Mat::Zero(nodes, 4);
      tr.controls = Mat::Zero(nodes, 2);
      tr.duration = params.duration;
      const double T = params.duration;
      const double a = sign * params.guess_detour;
      for (int k = 0; k < nodes; ++k) {
        const double z = static_cast<double>(k) / (nodes - 1);
        tr.states(k, 0) = params.goal_x * (3 * z * z - 2 * z * z * z);
        tr.states(k, 1) = a * 16 * z * z * (1 - z) * (1 - z);
        tr.states(k, 2) = params.goal_x * (6 * z - 6 * z * z) / T;
        tr.states(k, 3) = a * 16 * (2 * z - 6 * z * z + 4 * z * z * z) / T;
      }
      out.push_back(std::move(tr));
    }
    return out;
  };
  return s;
}

}  // namespace gtl

#endif  // GTL_SYSTEMS_HPP_
