#ifndef GTL_TESTS_TEST_HELPERS_HPP_
#define GTL_TESTS_TEST_HELPERS_HPP_

#include <cmath>
#include <functional>
#include <random>

#include "gtl/common.hpp"
#include "gtl/systems.hpp"
#include "gtl/taskspace.hpp"

namespace gtl::testing {

inline Task task1(double a) { return Task{Vec::Constant(1, a)}; }

/// Central-difference gradient of a scalar function.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& z, double step = 1e-6) {
  Vec g(z.size());
  Vec p = z;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double h = step * std::max(1.0, std::abs(z[j]));
    p[j] = z[j] + h;
    const double fp = f(p);
    p[j] = z[j] - h;
    const double fm = f(p);
    p[j] = z[j];
    g[j] = (fp - fm) / (2 * h);
  }
  return g;
}

/// Central-difference Jacobian of a vector function.
inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& z, double step = 1e-6) {
  const Vec f0 = f(z);
  Mat J(f0.size(), z.size());
  Vec p = z;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double h = step * std::max(1.0, std::abs(z[j]));
    p[j] = z[j] + h;
    const Vec fp = f(p);
    p[j] = z[j] - h;
    const Vec fm = f(p);
    p[j] = z[j];
    J.col(j) = (fp - fm) / (2 * h);
  }
  return J;
}

/// |a - b|_inf / max(1, |b|_inf).
inline double rel_err(const Mat& a, const Mat& b) {
  return (a - b).lpNorm<Eigen::Infinity>() / std::max(1.0, b.lpNorm<Eigen::Infinity>());
}

inline Vec random_vec(int n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

/// Double integrator with a time-varying path inequality x_0 <= 0.8 + 0.1 t + 0.05 u^2 and a
/// nonlinear task- and time-dependent path equality, so every Jacobian column type is exercised.
inline SystemSpec constrained_toy_spec(const TaskSpace& space) {
  SystemSpec s = double_integrator_spec(space, DoubleIntegratorParams{Interval{0.5, 2.0}});
  s.path_ineq = [](const Task&, const Vec& x, const Vec& u, double t) {
    Residual r;
    r.value = Vec::Constant(1, x[0] - 0.8 - 0.1 * t - 0.05 * u[0] * u[0]);
    r.jac = Mat::Zero(1, 4);
    r.jac(0, 0) = 1.0;
    r.jac(0, 2) = -0.1 * u[0];
    r.jac(0, 3) = -0.1;
    return r;
  };
  s.n_path_ineq = 1;
  s.path_eq = [](const Task& tau, const Vec& x, const Vec& u, double t) {
    Residual r;
    r.value = Vec::Constant(1, std::sin(x[1]) * u[0] - 0.01 * tau[0] * t);
    r.jac = Mat::Zero(1, 4);
    r.jac(0, 1) = std::cos(x[1]) * u[0];
    r.jac(0, 2) = std::sin(x[1]);
    r.jac(0, 3) = -0.01 * tau[0];
    return r;
  };
  s.n_path_eq = 1;
  return s;
}

/// Fixed-duration double integrator with speed limit x_1 <= 1.2, active for d > 0.8.
inline SystemSpec speed_limited_spec(const TaskSpace& space) {
  SystemSpec s = double_integrator_spec(space);
  s.path_ineq = [](const Task&, const Vec& x, const Vec&, double) {
    Residual r;
    r.value = Vec::Constant(1, x[1] - 1.2);
    r.jac = Mat::Zero(1, 4);
    r.jac(0, 1) = 1.0;
    return r;
  };
  s.n_path_ineq = 1;
  return s;
}

/// Path equalities x_0 = 0 and x_0 = 1 at every node: no feasible point exists.
inline SystemSpec contradictory_spec(const TaskSpace& space) {
  SystemSpec s = double_integrator_spec(space);
  s.path_eq = [](const Task&, const Vec& x, const Vec&, double) {
    Residual r;
    r.value = Vec(2);
    r.value << x[0], x[0] - 1.0;
    r.jac = Mat::Zero(2, 4);
    r.jac(0, 0) = 1.0;
    r.jac(1, 0) = 1.0;
    return r;
  };
  s.n_path_eq = 2;
  return s;
}

}  // namespace gtl::testing

#endif  // GTL_TESTS_TEST_HELPERS_HPP_
