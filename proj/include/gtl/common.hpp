#ifndef GTL_COMMON_HPP_
#define GTL_COMMON_HPP_

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace gtl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SparseMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Error carrying a machine-readable kind ("invalid_argument", "unknown_system", ...).
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

inline void require(bool cond, const std::string& what,
                    const char* kind = "invalid_argument") {
  if (!cond) throw Error(kind, what);
}

struct Interval {
  double lower = -kInf;
  double upper = kInf;

  bool contains(double v) const { return v >= lower && v <= upper; }
  double clamp(double v) const { return v < lower ? lower : (v > upper ? upper : v); }
  double midpoint() const { return 0.5 * (lower + upper); }
};

/// Componentwise box; an empty box means "unbounded" for any dimension.
struct Box {
  Vec lower;
  Vec upper;

  static Box unbounded(int dim) {
    return {Vec::Constant(dim, -kInf), Vec::Constant(dim, kInf)};
  }
};

}  // namespace gtl

#endif  // GTL_COMMON_HPP_
