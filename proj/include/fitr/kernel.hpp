#ifndef FITR_KERNEL_HPP
#define FITR_KERNEL_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fitr/core.hpp"

namespace fitr {

enum class KernelKind { Linear, Gaussian };

inline std::string to_string(KernelKind k) { return k == KernelKind::Linear ? "linear" : "gaussian"; }

/// Kernel definition. Immutable once built; Gaussian is
/// k(x, y) = exp(-sigma^2 * |x - y|^2).
class KernelSpec {
 public:
  static KernelSpec linear(bool include_intercept = true) {
    return KernelSpec(KernelKind::Linear, std::nullopt, include_intercept);
  }

  static KernelSpec gaussian(double sigma, bool include_intercept = true) {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw Error("gaussian kernel bandwidth must be positive and finite");
    return KernelSpec(KernelKind::Gaussian, sigma, include_intercept);
  }

  KernelKind kind() const noexcept { return kind_; }
  bool include_intercept() const noexcept { return include_intercept_; }

  /// Bandwidth sigma; absent for the linear kernel.
  std::optional<double> bandwidth() const noexcept { return sigma_; }

  double sigma() const {
    if (!sigma_) throw Error("linear kernel has no bandwidth");
    return *sigma_;
  }

  bool operator==(const KernelSpec&) const = default;

 private:
  KernelSpec(KernelKind kind, std::optional<double> sigma, bool intercept)
      : kind_(kind), sigma_(sigma), include_intercept_(intercept) {}

  KernelKind kind_;
  std::optional<double> sigma_;
  bool include_intercept_;
};

namespace detail {

template <typename A, typename B>
double kernel_eval_unchecked(const KernelSpec& spec, const A& x, const B& y) {
  if (spec.kind() == KernelKind::Linear) return x.dot(y);
  const double s = spec.sigma();
  return std::exp(-s * s * (x - y).squaredNorm());
}

}  // namespace detail

inline double kernel_eval(const KernelSpec& spec, const Vector& x, const Vector& y) {
  if (x.size() != y.size() || x.size() < 1)
    throw Error("kernel_eval: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                std::to_string(y.size()) + ")");
  require_finite(x, "kernel_eval: x");
  require_finite(y, "kernel_eval: y");
  return detail::kernel_eval_unchecked(spec, x, y);
}

inline Matrix gram_matrix(const KernelSpec& spec, const Matrix& xa, const Matrix& xb) {
  if (xa.cols() != xb.cols())
    throw Error("gram_matrix: column mismatch (" + std::to_string(xa.cols()) + " vs " +
                std::to_string(xb.cols()) + ")");
  if (spec.kind() == KernelKind::Linear) return xa * xb.transpose();

  const double s2 = spec.sigma() * spec.sigma();
  const bool self = &xa == &xb;
  Matrix g(xa.rows(), xb.rows());
  for (Eigen::Index i = 0; i < xa.rows(); ++i) {
    for (Eigen::Index j = self ? i : 0; j < xb.rows(); ++j) {
      g(i, j) = std::exp(-s2 * (xa.row(i) - xb.row(j)).squaredNorm());
      if (self) g(j, i) = g(i, j);
    }
  }
  return g;
}

/// All n(n-1)/2 pairwise Euclidean distances over i < j.
inline std::vector<double> pairwise_distances(const Matrix& x) {
  std::vector<double> out;
  const auto n = x.rows();
  out.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) out.push_back((x.row(i) - x.row(j)).norm());
  return out;
}

/// Median heuristic: sigma = 1 / median pairwise distance, so the exponent is
/// -1 at the median distance. Even counts average the two middle values.
inline double median_bandwidth(const Matrix& x) {
  if (x.rows() < 2) throw Error("median_bandwidth: need at least two rows");
  require_finite(x, "median_bandwidth: X");
  std::vector<double> d = pairwise_distances(x);
  const std::size_t m = d.size();
  std::sort(d.begin(), d.end());
  const double med = (m % 2 == 1) ? d[m / 2] : 0.5 * (d[m / 2 - 1] + d[m / 2]);
  if (!(med > 0.0)) throw Error("median_bandwidth: degenerate design, median pairwise distance is 0");
  return 1.0 / med;
}

}  // namespace fitr

#endif  // FITR_KERNEL_HPP
