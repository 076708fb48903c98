#ifndef GTL_TRAJECTORY_HPP_
#define GTL_TRAJECTORY_HPP_

#include "gtl/common.hpp"

namespace gtl {

/// Discretized trajectory on L_T nodes: states (L_T x p), controls (L_T x q), duration T.
struct Trajectory {
  Mat states;
  Mat controls;
  double duration = 0.0;

  int nodes() const { return static_cast<int>(states.rows()); }
  int state_dim() const { return static_cast<int>(states.cols()); }
  int control_dim() const { return static_cast<int>(controls.cols()); }

  /// Node times t_k = k T / (L_T - 1).
  double time_at(int k) const { return duration * k / (nodes() - 1); }
};

/// Row-major (node-major) flattening of a node x dim matrix.
inline Vec flatten_rows(const Mat& m) {
  Vec out(m.size());
  for (Eigen::Index k = 0; k < m.rows(); ++k)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[k * m.cols() + j] = m(k, j);
  return out;
}

inline Mat unflatten_rows(const Eigen::Ref<const Vec>& v, int rows, int cols) {
  Mat out(rows, cols);
  for (int k = 0; k < rows; ++k)
    for (int j = 0; j < cols; ++j) out(k, j) = v[k * cols + j];
  return out;
}

/// Consensus-layout vector (X flattened node-major, gamma * T).
inline Vec consensus_vector(const Mat& states, double duration, double gamma) {
  Vec out(states.size() + 1);
  out.head(states.size()) = flatten_rows(states);
  out[states.size()] = gamma * duration;
  return out;
}

inline Vec consensus_vector(const Trajectory& traj, double gamma) {
  return consensus_vector(traj.states, traj.duration, gamma);
}

}  // namespace gtl

#endif  // GTL_TRAJECTORY_HPP_
