#ifndef FITR_EVAL_HPP
#define FITR_EVAL_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "fitr/core.hpp"
#include "fitr/dataset.hpp"
#include "fitr/rng.hpp"
#include "fitr/rule.hpp"
#include "fitr/scenario.hpp"

namespace fitr {

/// Metric bundle for one fitted rule.
struct EvalReport {
  double value_estimate = 0.0;
  std::map<int, double> disagreement;  // secondary index k -> rate
  double misclassification = 0.0;
  double value_gap = 0.0;              // V_1(f*) - V_1(f_hat)
};

/// Raised when no sample received the treatment the rule recommends.
class NoOverlapError : public Error {
 public:
  NoOverlapError() : Error("ipw_value: no sample follows the rule (non-overlapping policy)") {}
};

/// Normalized inverse-probability-weighted value of the decisions on the
/// primary outcome: sum R_i1 1{A_i = d_i}/pi_i over sum 1{A_i = d_i}/pi_i.
inline double ipw_value(const TrialDataset& data, const Decisions& decisions) {
  require(data.n() > 0, "ipw_value: empty dataset");
  require(decisions.size() == data.n(), "ipw_value: decision count must match the sample size");
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.A[i] != decisions[i]) continue;
    const double w = 1.0 / data.propensity[i];
    num += data.R(i, 0) * w;
    den += w;
  }
  if (den == 0.0) throw NoOverlapError();
  return num / den;
}

inline double ipw_value(const TrialDataset& data, const BinaryRule& rule) { return ipw_value(data, rule(data.X)); }

inline double disagreement_rate(const Decisions& a, const Decisions& b) {
  require(a.size() == b.size() && a.size() > 0, "disagreement_rate: need equal, non-empty decision sets");
  Eigen::Index diff = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) diff += (a[i] * b[i] < 0) ? 1 : 0;
  return static_cast<double>(diff) / static_cast<double>(a.size());
}

inline double disagreement_rate(const BinaryRule& a, const BinaryRule& b, const Matrix& x_test) {
  require(x_test.rows() > 0, "disagreement_rate: empty test set");
  return disagreement_rate(a(x_test), b(x_test));
}

/// Mean of m_k(X) + T_k(X, d(X)) over the rows of a fixed test set. The
/// zero-mean noise is left out unless `noise_rng` is given.
inline double mc_value(const Decisions& decisions, const ScenarioSpec& s, int k, const Matrix& x_test,
                       Rng* noise_rng = nullptr) {
  require(decisions.size() == x_test.rows() && x_test.rows() > 0, "mc_value: decisions/test size mismatch");
  double sum = 0.0;
  Vector z(s.K());
  for (Eigen::Index i = 0; i < x_test.rows(); ++i) {
    double v = s.mean_outcome(k, x_test(i, 0), x_test(i, 1), decisions[i]);
    if (noise_rng) {
      for (int j = 0; j < s.K(); ++j) z[j] = noise_rng->normal();
      v += (s.noise_chol() * z)[k - 1];
    }
    sum += v;
  }
  return sum / static_cast<double>(x_test.rows());
}

inline double mc_value(const BinaryRule& rule, const ScenarioSpec& s, int k, Eigen::Index test_size,
                       std::uint64_t seed, bool noisy = false) {
  require(test_size > 0, "mc_value: test size must be positive");
  Rng rng(seed);
  const Matrix x = generate_covariates(test_size, s.d(), rng);
  if (!noisy) return mc_value(rule(x), s, k, x);
  return mc_value(rule(x), s, k, x, &rng);
}

inline double rmse(const std::vector<double>& gaps) {
  require(!gaps.empty(), "rmse: empty input");
  double ss = 0.0;
  for (double g : gaps) ss += g * g;
  return std::sqrt(ss / static_cast<double>(gaps.size()));
}

}  // namespace fitr

#endif  // FITR_EVAL_HPP
