#ifndef FITR_DATASET_HPP
#define FITR_DATASET_HPP

#include <string>
#include <vector>

#include "fitr/core.hpp"

namespace fitr {

/// Randomized-trial sample: covariates X (n x d), treatments A in {-1,+1},
/// outcomes R (n x K, column 0 primary) and propensities pi(A_i; X_i).
struct TrialDataset {
  Matrix X;
  Decisions A;
  Matrix R;
  Vector propensity;

  Eigen::Index n() const noexcept { return X.rows(); }
  Eigen::Index d() const noexcept { return X.cols(); }
  Eigen::Index K() const noexcept { return R.cols(); }

  /// Throws on the first violated invariant.
  void validate() const {
    const auto rows = X.rows();
    require(rows >= 2, "dataset needs at least 2 samples");
    require(X.cols() >= 1, "dataset needs at least one covariate");
    require(R.cols() >= 1, "dataset needs at least one outcome column");
    require(A.size() == rows && R.rows() == rows && propensity.size() == rows,
            "dataset row counts disagree");
    require_finite(X, "covariates");
    require_finite(R, "outcomes");
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (A[i] != 1 && A[i] != -1)
        throw Error("treatment at row " + std::to_string(i) + " is not in {-1,+1}");
      const double p = propensity[i];
      if (!(p > 0.0 && p < 1.0))
        throw Error("propensity at row " + std::to_string(i) + " is outside (0,1)");
    }
  }

  /// Row subset, all outcome columns kept.
  TrialDataset subset(const std::vector<Eigen::Index>& rows) const {
    TrialDataset out;
    const auto m = static_cast<Eigen::Index>(rows.size());
    out.X.resize(m, X.cols());
    out.A.resize(m);
    out.R.resize(m, R.cols());
    out.propensity.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto r = rows[static_cast<std::size_t>(i)];
      out.X.row(i) = X.row(r);
      out.A[i] = A[r];
      out.R.row(i) = R.row(r);
      out.propensity[i] = propensity[r];
    }
    return out;
  }

  /// Same sample with outcome column `k` moved to the primary slot and the
  /// remaining columns dropped. Used to learn a secondary-outcome rule.
  TrialDataset with_primary(Eigen::Index k) const {
    require(k >= 0 && k < R.cols(), "outcome index out of range");
    TrialDataset out{X, A, R.col(k), propensity};
    return out;
  }
};

}  // namespace fitr

#endif  // FITR_DATASET_HPP
