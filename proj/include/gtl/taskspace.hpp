#ifndef GTL_TASKSPACE_HPP_
#define GTL_TASKSPACE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "gtl/common.hpp"

namespace gtl {

/// A point of the task space.
struct Task {
  Vec coords;

  int dims() const { return static_cast<int>(coords.size()); }
  double operator[](int j) const { return coords[j]; }
};

/// Axis-aligned box task space.
class TaskSpace {
 public:
  TaskSpace(Vec lower, Vec upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
    require(lower_.size() >= 1, "task space needs at least one dimension");
    require(lower_.size() == upper_.size(), "task space bound dimensions differ");
    for (Eigen::Index j = 0; j < lower_.size(); ++j) {
      require(std::isfinite(lower_[j]) && std::isfinite(upper_[j]),
              "task space bounds must be finite");
      require(lower_[j] < upper_[j], "task space requires lower < upper on every axis");
    }
  }

  int dims() const { return static_cast<int>(lower_.size()); }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }

  double volume() const { return (upper_ - lower_).prod(); }

  bool contains(const Task& t) const {
    if (t.dims() != dims()) return false;
    return ((t.coords.array() >= lower_.array()) && (t.coords.array() <= upper_.array())).all();
  }

  Task center() const { return Task{0.5 * (lower_ + upper_)}; }

 private:
  Vec lower_;
  Vec upper_;
};

/// Ordered task list; index i identifies task i for the whole run.
struct TaskSet {
  std::vector<Task> tasks;
  std::uint64_t seed = 0;

  std::size_t size() const { return tasks.size(); }
  const Task& operator[](std::size_t i) const { return tasks[i]; }
};

inline TaskSet sample_uniform(const TaskSpace& space, std::size_t n, std::uint64_t seed) {
  require(n >= 1, "sample_uniform needs n >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TaskSet out;
  out.seed = seed;
  out.tasks.reserve(n);
  const Vec width = space.upper() - space.lower();
  for (std::size_t i = 0; i < n; ++i) {
    Vec c(space.dims());
    for (int j = 0; j < space.dims(); ++j) c[j] = space.lower()[j] + width[j] * unit(rng);
    out.tasks.push_back(Task{std::move(c)});
  }
  return out;
}

namespace detail {

inline double squared_distance(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

// Static kd-tree over a point list, used for exact nearest-distinct-neighbour queries.
class KdTree {
 public:
  explicit KdTree(const std::vector<Task>& pts) : pts_(pts), order_(pts.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!pts.empty()) root_ = build(0, pts.size(), 0);
  }

  // Squared distance from point `self` to its nearest neighbour with a different index.
  double nearest_other_sq(std::size_t self) const {
    double best = kInf;
    search(root_, self, best);
    return best;
  }

 private:
  struct Node {
    std::size_t begin, end;
    int axis;
    double split;
    int left = -1, right = -1;
  };
  static constexpr std::size_t kLeaf = 8;

  int build(std::size_t begin, std::size_t end, int depth) {
    Node node{begin, end, -1, 0.0};
    const int dims = pts_[order_[begin]].dims();
    if (end - begin > kLeaf) {
      // split on the widest axis at the median
      int axis = 0;
      double widest = -1.0;
      for (int j = 0; j < dims; ++j) {
        double lo = kInf, hi = -kInf;
        for (std::size_t i = begin; i < end; ++i) {
          lo = std::min(lo, pts_[order_[i]][j]);
          hi = std::max(hi, pts_[order_[i]][j]);
        }
        if (hi - lo > widest) { widest = hi - lo; axis = j; }
      }
      const std::size_t mid = begin + (end - begin) / 2;
      std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                       [&](std::size_t a, std::size_t b) { return pts_[a][axis] < pts_[b][axis]; });
      node.axis = axis;
      node.split = pts_[order_[mid]][axis];
      const int id = static_cast<int>(nodes_.size());
      nodes_.push_back(node);
      const int l = build(begin, mid, depth + 1);
      const int r = build(mid, end, depth + 1);
      nodes_[id].left = l;
      nodes_[id].right = r;
      return id;
    }
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }

  void search(int id, std::size_t self, double& best) const {
    const Node& node = nodes_[id];
    const Vec& q = pts_[self].coords;
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t j = order_[i];
        if (j == self) continue;
        best = std::min(best, squared_distance(q, pts_[j].coords));
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const int near = diff < 0 ? node.left : node.right;
    const int far = diff < 0 ? node.right : node.left;
    search(near, self, best);
    if (diff * diff <= best) search(far, self, best);
  }

  const std::vector<Task>& pts_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace detail

/// Distance from every task to its nearest distinct sample (Euclidean).
inline std::vector<double> nearest_neighbor_distances(const TaskSet& ts) {
  require(ts.size() >= 2, "nearest-neighbour distances need at least two tasks");
  detail::KdTree tree(ts.tasks);
  std::vector<double> out(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) out[i] = std::sqrt(tree.nearest_other_sq(i));
  return out;
}

/// eps_N = max_i min_{j != i} |tau_i - tau_j|.
inline double covering_radius(const TaskSet& ts) {
  require(ts.size() >= 2, "covering_radius needs at least two tasks");
  const auto d = nearest_neighbor_distances(ts);
  return *std::max_element(d.begin(), d.end());
}

/// beta * (log n / n)^(1/m), the expectation bound on eps_N for uniform samples.
inline double gumbel_expectation_bound(std::size_t n, int m, double beta) {
  require(n >= 2, "gumbel_expectation_bound needs n >= 2");
  require(m >= 1, "gumbel_expectation_bound needs m >= 1");
  const double nd = static_cast<double>(n);
  return beta * std::pow(std::log(nd) / nd, 1.0 / m);
}

}  // namespace gtl

#endif  // GTL_TASKSPACE_HPP_
