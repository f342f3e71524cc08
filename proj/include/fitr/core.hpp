#ifndef FITR_CORE_HPP
#define FITR_CORE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace fitr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Decisions = Eigen::VectorXi;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an objective or data entry is NaN/inf. `index` names the
/// offending sample or coordinate, or -1 when not attributable.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, std::ptrdiff_t index)
      : Error(what + " (index " + std::to_string(index) + ")"), index_(index) {}
  std::ptrdiff_t index() const noexcept { return index_; }

 private:
  std::ptrdiff_t index_;
};

/// sgn with the global tie convention sgn(0) = +1.
inline int sgn(double v) noexcept { return v < 0.0 ? -1 : 1; }

inline Decisions sgn(const Vector& v) {
  Decisions d(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) d[i] = sgn(v[i]);
  return d;
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

inline void require_finite(const Matrix& m, const std::string& what) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (!std::isfinite(m(i, j))) throw NonFiniteError(what + " has a non-finite entry", i);
}

}  // namespace fitr

#endif  // FITR_CORE_HPP
