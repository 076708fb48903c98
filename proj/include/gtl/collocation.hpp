#ifndef GTL_COLLOCATION_HPP_
#define GTL_COLLOCATION_HPP_

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "gtl/common.hpp"
#include "gtl/systems.hpp"
#include "gtl/taskspace.hpp"
#include "gtl/trajectory.hpp"

namespace gtl {

/// rho/2 |(X, gamma T) - target + multiplier|^2 added to the transcribed objective.
struct ProximalTerm {
  Vec target;
  Vec multiplier;
  double rho = 0.0;
  double gamma = 1.0;
};

namespace detail {

// Central-difference Jacobian of a vector-valued gradient function, symmetrized.
inline Mat fd_hessian(const std::function<Vec(const Vec&)>& grad, const Vec& at) {
  const Eigen::Index n = at.size();
  Mat H(n, n);
  Vec probe = at;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double step = 1e-6 * std::max(1.0, std::abs(at[j]));
    probe[j] = at[j] + step;
    const Vec gp = grad(probe);
    probe[j] = at[j] - step;
    const Vec gm = grad(probe);
    probe[j] = at[j];
    H.col(j) = (gp - gm) / (2.0 * step);
  }
  return 0.5 * (H + H.transpose());
}

}  // namespace detail

/// Trapezoidal-collocation transcription of one task's trajectory optimization problem.
///
/// Decision layout: [x_0 .. x_{L-1}, u_0 .. u_{L-1}, T] with node-major blocks.
/// Equalities: rate-form defects (x_{k+1} - x_k)/h - (f_k + f_{k+1})/2, h = T/(L-1), then
/// terminal constraints, then per-node path equalities. Inequalities: per-node path
/// inequalities (<= 0).
class NlpInstance {
 public:
  NlpInstance(SystemSpec spec, Task task, int nodes, std::optional<ProximalTerm> prox)
      : spec_(std::move(spec)), task_(std::move(task)), nodes_(nodes), prox_(std::move(prox)) {
    require(nodes_ >= 2, "transcription needs L_T >= 2 nodes");
    require(task_.dims() == spec_.task_dim, "task dimension does not match the system");
    p_ = spec_.state_dim;
    q_ = spec_.control_dim;
    n_ = nodes_ * (p_ + q_) + 1;
    if (prox_) {
      require(prox_->target.size() == nodes_ * p_ + 1 &&
                  prox_->multiplier.size() == nodes_ * p_ + 1,
              "proximal target/multiplier length must be L_T * p + 1");
      require(prox_->rho >= 0.0, "proximal rho must be >= 0");
      require(prox_->gamma > 0.0, "proximal gamma must be > 0");
    }
    lower_.resize(n_);
    upper_.resize(n_);
    for (int k = 0; k < nodes_; ++k) {
      lower_.segment(x_index(k), p_) = spec_.state_bounds.lower;
      upper_.segment(x_index(k), p_) = spec_.state_bounds.upper;
      lower_.segment(u_index(k), q_) = spec_.control_bounds.lower;
      upper_.segment(u_index(k), q_) = spec_.control_bounds.upper;
    }
    const Interval dT = spec_.duration_bounds(task_);
    require(dT.lower > 0.0 && dT.lower <= dT.upper, "duration box must be positive");
    lower_[t_index()] = dT.lower;
    upper_[t_index()] = dT.upper;
  }

  int num_vars() const { return n_; }
  int nodes() const { return nodes_; }
  int num_eq() const { return (nodes_ - 1) * p_ + spec_.n_terminal + nodes_ * spec_.n_path_eq; }
  int num_ineq() const { return nodes_ * spec_.n_path_ineq; }
  const Vec& lower_bounds() const { return lower_; }
  const Vec& upper_bounds() const { return upper_; }
  const SystemSpec& spec() const { return spec_; }
  const Task& task() const { return task_; }
  const std::optional<ProximalTerm>& prox() const { return prox_; }

  int x_index(int k) const { return k * p_; }
  int u_index(int k) const { return nodes_ * p_ + k * q_; }
  int t_index() const { return n_ - 1; }

  Vec pack(const Trajectory& tr) const {
    require(tr.nodes() == nodes_ && tr.state_dim() == p_ && tr.control_dim() == q_,
            "trajectory shape does not match the transcription");
    Vec z(n_);
    z.head(nodes_ * p_) = flatten_rows(tr.states);
    z.segment(nodes_ * p_, nodes_ * q_) = flatten_rows(tr.controls);
    z[t_index()] = tr.duration;
    return z;
  }

  Trajectory unpack(const Vec& z) const {
    Trajectory tr;
    tr.states = unflatten_rows(z.head(nodes_ * p_), nodes_, p_);
    tr.controls = unflatten_rows(z.segment(nodes_ * p_, nodes_ * q_), nodes_, q_);
    tr.duration = z[t_index()];
    return tr;
  }

  /// L(X, U, T) = T / L_T * sum_k l(x_k, u_k, T), without the proximal term.
  double trajectory_cost(const Vec& z, Vec* grad = nullptr) const {
    const double T = z[t_index()];
    const double w = T / nodes_;
    if (grad) grad->setZero(n_);
    double sum = 0.0;
    Vec g;
    for (int k = 0; k < nodes_; ++k) {
      const double lk = spec_.running_cost(task_, z.segment(x_index(k), p_),
                                           z.segment(u_index(k), q_), T, grad ? &g : nullptr);
      sum += lk;
      if (grad) {
        grad->segment(x_index(k), p_) += w * g.head(p_);
        grad->segment(u_index(k), q_) += w * g.segment(p_, q_);
        (*grad)[t_index()] += w * g[p_ + q_] + lk / nodes_;
      }
    }
    return w * sum;
  }

  /// rho/2 |(X, gamma T) - z + lambda|^2, zero without a proximal term.
  double proximal_value(const Vec& z, Vec* grad = nullptr) const {
    if (grad) grad->setZero(n_);
    if (!prox_) return 0.0;
    const int nx = nodes_ * p_;
    Vec r(nx + 1);
    r.head(nx) = z.head(nx) - prox_->target.head(nx) + prox_->multiplier.head(nx);
    r[nx] = prox_->gamma * z[t_index()] - prox_->target[nx] + prox_->multiplier[nx];
    if (grad) {
      grad->head(nx) = prox_->rho * r.head(nx);
      (*grad)[t_index()] = prox_->rho * prox_->gamma * r[nx];
    }
    return 0.5 * prox_->rho * r.squaredNorm();
  }

  double objective(const Vec& z, Vec* grad = nullptr) const {
    if (!grad) return trajectory_cost(z) + proximal_value(z);
    Vec gp;
    const double v = trajectory_cost(z, grad) + proximal_value(z, &gp);
    *grad += gp;
    return v;
  }

  Vec eq_residuals(const Vec& z) const { return constraints(z, true, nullptr); }
  Vec ineq_residuals(const Vec& z) const { return constraints(z, false, nullptr); }

  SparseMat eq_jacobian(const Vec& z) const {
    std::vector<Triplet> trip;
    constraints(z, true, &trip);
    SparseMat J(num_eq(), n_);
    J.setFromTriplets(trip.begin(), trip.end());
    return J;
  }

  SparseMat ineq_jacobian(const Vec& z) const {
    std::vector<Triplet> trip;
    constraints(z, false, &trip);
    SparseMat J(num_ineq(), n_);
    J.setFromTriplets(trip.begin(), trip.end());
    return J;
  }

  /// Hessian of f + y_eq . c_eq + y_in . c_in. Per-node blocks are finite-differenced from
  /// the analytic gradients; the T coupling of the defect scaling is exact.
  SparseMat lagrangian_hessian(const Vec& z, const Vec& y_eq, const Vec& y_in) const {
    std::vector<Triplet> trip;
    const double T = z[t_index()];
    const int L = nodes_;
    const int nl = p_ + q_ + 1;
    auto node_global = [&](int k, int local) {
      if (local < p_) return x_index(k) + local;
      if (local < p_ + q_) return u_index(k) + local - p_;
      return t_index();
    };
    auto node_local = [&](int k) {
      Vec v(nl);
      v.head(p_) = z.segment(x_index(k), p_);
      v.segment(p_, q_) = z.segment(u_index(k), q_);
      v[p_ + q_] = T;
      return v;
    };
    auto scatter_node = [&](int k, const Mat& H) {
      for (int a = 0; a < nl; ++a)
        for (int b = 0; b < nl; ++b)
          if (H(a, b) != 0.0) trip.emplace_back(node_global(k, a), node_global(k, b), H(a, b));
    };

    // running cost
    for (int k = 0; k < L; ++k) {
      auto grad = [&](const Vec& v) {
        Vec g;
        const double lk = spec_.running_cost(task_, v.head(p_), v.segment(p_, q_), v[p_ + q_], &g);
        Vec out = (v[p_ + q_] / L) * g;
        out[p_ + q_] += lk / L;
        return out;
      };
      scatter_node(k, detail::fd_hessian(grad, node_local(k)));
    }
    // proximal
    if (prox_) {
      for (int i = 0; i < L * p_; ++i) trip.emplace_back(i, i, prox_->rho);
      trip.emplace_back(t_index(), t_index(), prox_->rho * prox_->gamma * prox_->gamma);
    }
    // defects
    const double scale = (L - 1) / T;
    for (int k = 0; k < L; ++k) {
      Vec omega = Vec::Zero(p_);
      if (k >= 1) omega -= 0.5 * y_eq.segment((k - 1) * p_, p_);
      if (k <= L - 2) omega -= 0.5 * y_eq.segment(k * p_, p_);
      if (omega.isZero(0.0)) continue;
      auto grad = [&](const Vec& v) {
        const Residual f = spec_.dynamics(v.head(p_), v.segment(p_, q_));
        return Vec(f.jac.transpose() * omega);
      };
      Vec xu(p_ + q_);
      xu << z.segment(x_index(k), p_), z.segment(u_index(k), q_);
      const Mat H = detail::fd_hessian(grad, xu);
      Mat Hn = Mat::Zero(nl, nl);
      Hn.topLeftCorner(p_ + q_, p_ + q_) = H;
      scatter_node(k, Hn);
    }
    for (int k = 0; k + 1 < L; ++k) {
      const auto y = y_eq.segment(k * p_, p_);
      const Vec dx = z.segment(x_index(k + 1), p_) - z.segment(x_index(k), p_);
      const double c = scale / T;  // (L-1)/T^2
      for (int j = 0; j < p_; ++j) {
        if (y[j] == 0.0) continue;
        trip.emplace_back(x_index(k + 1) + j, t_index(), -c * y[j]);
        trip.emplace_back(t_index(), x_index(k + 1) + j, -c * y[j]);
        trip.emplace_back(x_index(k) + j, t_index(), c * y[j]);
        trip.emplace_back(t_index(), x_index(k) + j, c * y[j]);
      }
      trip.emplace_back(t_index(), t_index(), 2.0 * c / T * y.dot(dx));
    }
    // terminal
    if (spec_.n_terminal > 0) {
      const auto w = y_eq.segment((L - 1) * p_, spec_.n_terminal);
      if (!w.isZero(0.0)) {
        const int nt = 2 * p_ + 2 * q_ + 1;
        Vec v(nt);
        v << z.segment(x_index(0), p_), z.segment(u_index(0), q_), z.segment(x_index(L - 1), p_),
            z.segment(u_index(L - 1), q_), T;
        auto grad = [&](const Vec& a) {
          const Residual r = spec_.terminal_constraint(task_, a.head(p_), a.segment(p_, q_),
                                                       a.segment(p_ + q_, p_),
                                                       a.segment(2 * p_ + q_, q_), a[nt - 1]);
          return Vec(r.jac.transpose() * w);
        };
        const Mat H = detail::fd_hessian(grad, v);
        auto glob = [&](int a) {
          if (a < p_) return x_index(0) + a;
          if (a < p_ + q_) return u_index(0) + a - p_;
          if (a < 2 * p_ + q_) return x_index(L - 1) + a - p_ - q_;
          if (a < 2 * p_ + 2 * q_) return u_index(L - 1) + a - 2 * p_ - q_;
          return t_index();
        };
        for (int a = 0; a < nt; ++a)
          for (int b = 0; b < nt; ++b)
            if (H(a, b) != 0.0) trip.emplace_back(glob(a), glob(b), H(a, b));
      }
    }
    // path constraints
    auto path_hessian = [&](const auto& fn, int m, const Vec& weights, int offset) {
      if (m == 0) return;
      for (int k = 0; k < L; ++k) {
        const auto w = weights.segment(offset + k * m, m);
        if (w.isZero(0.0)) continue;
        const double tfrac = static_cast<double>(k) / (L - 1);
        auto grad = [&](const Vec& v) {
          const Residual r = fn(task_, v.head(p_), v.segment(p_, q_), tfrac * v[p_ + q_]);
          Vec out(nl);
          out.head(p_ + q_) = r.jac.leftCols(p_ + q_).transpose() * w;
          out[p_ + q_] = tfrac * r.jac.col(p_ + q_).dot(w);
          return out;
        };
        scatter_node(k, detail::fd_hessian(grad, node_local(k)));
      }
    };
    path_hessian(spec_.path_eq, spec_.n_path_eq, y_eq, (L - 1) * p_ + spec_.n_terminal);
    path_hessian(spec_.path_ineq, spec_.n_path_ineq, y_in, 0);

    SparseMat H(n_, n_);
    H.setFromTriplets(trip.begin(), trip.end());
    return H;
  }

 private:
  Vec constraints(const Vec& z, bool equality, std::vector<Triplet>* trip) const {
    const int L = nodes_;
    const double T = z[t_index()];
    Vec out(equality ? num_eq() : num_ineq());
    int row = 0;
    if (equality) {
      std::vector<Residual> f(L);
      for (int k = 0; k < L; ++k)
        f[k] = spec_.dynamics(z.segment(x_index(k), p_), z.segment(u_index(k), q_));
      const double scale = (L - 1) / T;
      for (int k = 0; k + 1 < L; ++k) {
        const Vec dx = z.segment(x_index(k + 1), p_) - z.segment(x_index(k), p_);
        out.segment(row, p_) = scale * dx - 0.5 * (f[k].value + f[k + 1].value);
        if (trip) {
          for (int i = 0; i < p_; ++i) {
            trip->emplace_back(row + i, x_index(k + 1) + i, scale);
            trip->emplace_back(row + i, x_index(k) + i, -scale);
            for (int j = 0; j < p_; ++j) {
              trip->emplace_back(row + i, x_index(k) + j, -0.5 * f[k].jac(i, j));
              trip->emplace_back(row + i, x_index(k + 1) + j, -0.5 * f[k + 1].jac(i, j));
            }
            for (int j = 0; j < q_; ++j) {
              trip->emplace_back(row + i, u_index(k) + j, -0.5 * f[k].jac(i, p_ + j));
              trip->emplace_back(row + i, u_index(k + 1) + j, -0.5 * f[k + 1].jac(i, p_ + j));
            }
            trip->emplace_back(row + i, t_index(), -scale / T * dx[i]);
          }
        }
        row += p_;
      }
      if (spec_.n_terminal > 0) {
        const Residual r = spec_.terminal_constraint(
            task_, z.segment(x_index(0), p_), z.segment(u_index(0), q_),
            z.segment(x_index(L - 1), p_), z.segment(u_index(L - 1), q_), T);
        out.segment(row, spec_.n_terminal) = r.value;
        if (trip) {
          for (int i = 0; i < spec_.n_terminal; ++i) {
            for (int j = 0; j < p_; ++j) {
              trip->emplace_back(row + i, x_index(0) + j, r.jac(i, j));
              trip->emplace_back(row + i, x_index(L - 1) + j, r.jac(i, p_ + q_ + j));
            }
            for (int j = 0; j < q_; ++j) {
              trip->emplace_back(row + i, u_index(0) + j, r.jac(i, p_ + j));
              trip->emplace_back(row + i, u_index(L - 1) + j, r.jac(i, 2 * p_ + q_ + j));
            }
            trip->emplace_back(row + i, t_index(), r.jac(i, 2 * p_ + 2 * q_));
          }
        }
        row += spec_.n_terminal;
      }
      path_rows(spec_.path_eq, spec_.n_path_eq, z, out, row, trip);
    } else {
      path_rows(spec_.path_ineq, spec_.n_path_ineq, z, out, row, trip);
    }
    return out;
  }

  template <class Fn>
  void path_rows(const Fn& fn, int m, const Vec& z, Vec& out, int& row,
                 std::vector<Triplet>* trip) const {
    if (m == 0) return;
    const double T = z[t_index()];
    for (int k = 0; k < nodes_; ++k) {
      const double tfrac = static_cast<double>(k) / (nodes_ - 1);
      const Residual r =
          fn(task_, z.segment(x_index(k), p_), z.segment(u_index(k), q_), tfrac * T);
      out.segment(row, m) = r.value;
      if (trip) {
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < p_; ++j) trip->emplace_back(row + i, x_index(k) + j, r.jac(i, j));
          for (int j = 0; j < q_; ++j)
            trip->emplace_back(row + i, u_index(k) + j, r.jac(i, p_ + j));
          trip->emplace_back(row + i, t_index(), tfrac * r.jac(i, p_ + q_));
        }
      }
      row += m;
    }
  }

  SystemSpec spec_;
  Task task_;
  int nodes_;
  std::optional<ProximalTerm> prox_;
  int p_ = 0, q_ = 0, n_ = 0;
  Vec lower_, upper_;
};

inline NlpInstance transcribe(const SystemSpec& spec, const Task& task, int nodes,
                              std::optional<ProximalTerm> prox = std::nullopt) {
  return NlpInstance(spec, task, nodes, std::move(prox));
}

/// Rate-form trapezoidal defects of a trajectory, (L_T - 1) * p values, node-major.
inline Vec defect_residuals(const Trajectory& traj, const SystemSpec& spec) {
  require(traj.state_dim() == spec.state_dim && traj.control_dim() == spec.control_dim,
          "trajectory dimensions do not match the system");
  require(traj.nodes() >= 2, "trajectory needs at least two nodes");
  const int L = traj.nodes(), p = spec.state_dim;
  const double scale = (L - 1) / traj.duration;
  Vec out((L - 1) * p);
  Vec f_prev = spec.dynamics(traj.states.row(0).transpose(), traj.controls.row(0).transpose()).value;
  for (int k = 0; k + 1 < L; ++k) {
    const Vec f_next =
        spec.dynamics(traj.states.row(k + 1).transpose(), traj.controls.row(k + 1).transpose())
            .value;
    out.segment(k * p, p) =
        scale * (traj.states.row(k + 1) - traj.states.row(k)).transpose() - 0.5 * (f_prev + f_next);
    f_prev = f_next;
  }
  return out;
}

}  // namespace gtl

#endif  // GTL_COLLOCATION_HPP_
