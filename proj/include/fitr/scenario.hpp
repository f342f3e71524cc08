#ifndef FITR_SCENARIO_HPP
#define FITR_SCENARIO_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>

#include "fitr/core.hpp"
#include "fitr/dataset.hpp"
#include "fitr/rng.hpp"
#include "fitr/rule.hpp"

namespace fitr {

enum class ScenarioId { S1, S2, S3, S4, S5, S6, S7, S8, Sensitivity };

/// Generative model R_k = m_k(X) + c_k * A * g_k(X) + eps_k with
/// X1, X2 ~ U(-1,1), X3 = 0.8 U + X1, remaining covariates U(-1,1), and
/// eps ~ N(0, Sigma) with 0.2 on the diagonal and 0.1 off it.
class ScenarioSpec {
 public:
  static ScenarioSpec make(ScenarioId id, double rho = 1.0, int d = 10) {
    ScenarioSpec s;
    s.id_ = id;
    s.rho_ = rho;
    s.d_ = d;
    require(d >= 3, "scenario: covariate dimension must be >= 3");
    require(std::isfinite(rho), "scenario: rho must be finite");
    switch (id) {
      case ScenarioId::S1: case ScenarioId::S2: case ScenarioId::S3: case ScenarioId::S4:
      case ScenarioId::Sensitivity:
        s.k_ = 2;
        break;
      default:
        s.k_ = 3;
    }
    s.noise_cov_ = Matrix::Constant(s.k_, s.k_, 0.1);
    s.noise_cov_.diagonal().setConstant(0.2);
    s.noise_chol_ = s.noise_cov_.llt().matrixL();
    return s;
  }

  static ScenarioSpec sensitivity(double rho, int d = 10) { return make(ScenarioId::Sensitivity, rho, d); }

  /// Parses "S1".."S8" and "SENS(rho)".
  static ScenarioSpec parse(const std::string& name, int d = 10) {
    if (name.size() == 2 && name[0] == 'S' && name[1] >= '1' && name[1] <= '8')
      return make(static_cast<ScenarioId>(name[1] - '1'), 1.0, d);
    if (name.rfind("SENS(", 0) == 0 && name.back() == ')') {
      const std::string inner = name.substr(5, name.size() - 6);
      std::size_t used = 0;
      double rho = 0.0;
      try {
        rho = std::stod(inner, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == inner.size() && used > 0) return sensitivity(rho, d);
    }
    throw Error("unknown scenario '" + name + "' (expected S1..S8 or SENS(rho))");
  }

  ScenarioId id() const noexcept { return id_; }
  int K() const noexcept { return k_; }
  int d() const noexcept { return d_; }
  double rho() const noexcept { return rho_; }
  const Matrix& noise_cov() const noexcept { return noise_cov_; }
  const Matrix& noise_chol() const noexcept { return noise_chol_; }
  bool nonlinear() const noexcept {
    return id_ == ScenarioId::S3 || id_ == ScenarioId::S4 || id_ == ScenarioId::S7 || id_ == ScenarioId::S8;
  }

  /// Reads the nonlinear interaction with the sign exactly as typeset,
  /// c * A * (-gamma - e^X1 - e^X2). Off by default: that reading makes every
  /// oracle rule constant -1.
  ScenarioSpec with_printed_nonlinear_sign(bool on = true) const {
    ScenarioSpec s = *this;
    s.printed_sign_ = on;
    return s;
  }
  bool printed_nonlinear_sign() const noexcept { return printed_sign_; }

  std::string name() const {
    if (id_ == ScenarioId::Sensitivity) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "SENS(%.9g)", rho_);
      return buf;
    }
    return "S" + std::to_string(static_cast<int>(id_) + 1);
  }

  /// m_k(x), k = 1..K.
  double main_effect(int k, double x1, double x2) const {
    switch (k) {
      case 1: return 1.0 + 2.0 * x1 + x2 * x2 + x1 * x2;
      case 2: return 1.0 + 2.0 * x1 * x1 + 1.5 * x2 + 0.5 * x1 * x2;
      case 3: return 1.0 + x1 + x2;
    }
    throw Error("scenario: outcome index out of range");
  }

  /// c_k > 0 in T_k(X, A) = c_k * A * g_k(X).
  double interaction_scale(int k) const {
    check_k(k);
    if (nonlinear()) return k == 1 ? 1.0 : 1.5;
    return k == 1 ? 0.5 : (k == 2 ? 0.8 : 0.6);
  }

  /// g_k(x); its sign is the optimal treatment for outcome k.
  double factor(int k, double x1, double x2) const {
    check_k(k);
    if (nonlinear()) {
      const double gamma = k == 1 ? 2.2 : (k == 3 ? 2.1 : gamma2());
      const double s = std::exp(x1) + std::exp(x2);
      return printed_sign_ ? -gamma - s : s - gamma;
    }
    double slope = 2.0;
    if (k == 2) slope = id_ == ScenarioId::Sensitivity ? 2.0 * rho_ : gamma1();
    if (k == 3) slope = 2.2;
    return 0.2 - x1 - slope * x2;
  }

  double interaction(int k, double x1, double x2, int a) const {
    return interaction_scale(k) * a * factor(k, x1, x2);
  }

  /// Noise-free mean outcome m_k(x) + T_k(x, a).
  double mean_outcome(int k, double x1, double x2, int a) const {
    return main_effect(k, x1, x2) + interaction(k, x1, x2, a);
  }

 private:
  ScenarioSpec() = default;

  void check_k(int k) const {
    if (k < 1 || k > k_) throw Error("scenario: outcome index out of range");
  }
  double gamma1() const { return (id_ == ScenarioId::S1 || id_ == ScenarioId::S5) ? 1.8 : 1.4; }
  double gamma2() const { return (id_ == ScenarioId::S3 || id_ == ScenarioId::S7) ? 2.3 : 2.4; }

  ScenarioId id_ = ScenarioId::S1;
  double rho_ = 1.0;
  int k_ = 2;
  int d_ = 10;
  bool printed_sign_ = false;
  Matrix noise_cov_;
  Matrix noise_chol_;
};

inline Matrix generate_covariates(Eigen::Index n, Eigen::Index d, Rng& rng) {
  require(d >= 3, "generate_covariates: d must be >= 3");
  require(n >= 0, "generate_covariates: n must be >= 0");
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.uniform(-1.0, 1.0);
    x(i, 2) = 0.8 * x(i, 2) + x(i, 0);
  }
  return x;
}

inline Matrix generate_covariates(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  return generate_covariates(n, d, rng);
}

/// Randomized trial with pi = 0.5. With `noiseless` set the outcomes are the
/// conditional means m_k(X) + T_k(X, A).
inline TrialDataset generate_dataset(const ScenarioSpec& s, Eigen::Index n, Rng& rng, bool noiseless = false) {
  TrialDataset data;
  data.X = generate_covariates(n, s.d(), rng);
  data.A.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) data.A[i] = rng.rademacher();
  data.propensity = Vector::Constant(n, 0.5);
  data.R.resize(n, s.K());
  Vector z(s.K());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < s.K(); ++k) z[k] = rng.normal();
    const Vector eps = s.noise_chol() * z;
    for (int k = 1; k <= s.K(); ++k) {
      data.R(i, k - 1) = s.mean_outcome(k, data.X(i, 0), data.X(i, 1), data.A[i]) + (noiseless ? 0.0 : eps[k - 1]);
    }
  }
  return data;
}

inline TrialDataset generate_dataset(const ScenarioSpec& s, Eigen::Index n, std::uint64_t seed,
                                     bool noiseless = false) {
  Rng rng(seed);
  return generate_dataset(s, n, rng, noiseless);
}

/// x -> sgn(g_k(x)), the closed-form optimal rule for outcome k.
inline BinaryRule oracle_rule(const ScenarioSpec& s, int k) {
  require(k >= 1 && k <= s.K(), "oracle_rule: outcome index out of range");
  return BinaryRule(
      [s, k](const Matrix& x) {
        require(x.cols() >= 2, "oracle_rule: need at least two covariates");
        Decisions d(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) d[i] = sgn(s.factor(k, x(i, 0), x(i, 1)));
        return d;
      },
      "oracle_f" + std::to_string(k));
}

}  // namespace fitr

#endif  // FITR_SCENARIO_HPP
