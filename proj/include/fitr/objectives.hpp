#ifndef FITR_OBJECTIVES_HPP
#define FITR_OBJECTIVES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fitr/core.hpp"
#include "fitr/dataset.hpp"
#include "fitr/optim.hpp"
#include "fitr/rule.hpp"

namespace fitr {

enum class Method { SepL, FitrRamp, FitrIntL };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::SepL: return "SepL";
    case Method::FitrRamp: return "FITR-Ramp";
    case Method::FitrIntL: return "FITR-IntL";
  }
  return "unknown";
}

inline Method method_from_string(const std::string& s) {
  if (s == "SepL" || s == "sepl") return Method::SepL;
  if (s == "FITR-Ramp" || s == "FitrRamp" || s == "ramp") return Method::FitrRamp;
  if (s == "FITR-IntL" || s == "FitrIntL" || s == "intl") return Method::FitrIntL;
  throw Error("unknown method '" + s + "' (expected SepL, FITR-Ramp or FITR-IntL)");
}

// ---------------------------------------------------------------------------
// Surrogate losses

/// phi(t) = log(1 + e^{-t}), evaluated as max(-t, 0) + log1p(e^{-|t|}).
inline double logistic_loss(double t) noexcept { return std::max(-t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

/// phi'(t) = -1 / (1 + e^{t}).
inline double logistic_slope(double t) noexcept {
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(t));
}

/// psi_kappa(t) = min(1, max(0, 1 - t/kappa)).
inline double ramp_loss(double t, double kappa) noexcept {
  if (t <= 0.0) return 1.0;
  if (t >= kappa) return 0.0;
  return 1.0 - t / kappa;
}

// ---------------------------------------------------------------------------
// Main-effect removal and sign flipping

struct MainEffectFit {
  Vector coefs;  // intercept first
  bool rank_deficient = false;

  Vector predict(const Matrix& x) const {
    return (x * coefs.tail(coefs.size() - 1)).array() + coefs[0];
  }
};

/// OLS of r on [1, X]. A rank-deficient design falls back to normal equations
/// with a 1e-10 ridge and sets `rank_deficient`.
inline MainEffectFit fit_main_effect(const Matrix& x, const Vector& r) {
  require(x.rows() == r.size(), "fit_main_effect: row mismatch");
  Matrix design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  MainEffectFit out;
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  if (x.rows() > x.cols() + 1 && qr.rank() == design.cols()) {
    out.coefs = qr.solve(r);
  } else {
    Matrix normal = design.transpose() * design;
    normal.diagonal().array() += 1e-10;
    out.coefs = normal.ldlt().solve(design.transpose() * r);
    out.rank_deficient = true;
  }
  return out;
}

struct PreprocessedRewards {
  Vector weights;            // |r - r_hat| / pi
  Decisions labels;          // A * sgn(r - r_hat)
  Vector main_effect_coefs;  // empty when main-effect removal is off
  bool rank_deficient = false;
};

/// Weight/label transform for one reward vector. With `remove_main_effect`
/// off the raw reward is used in place of the residual.
inline PreprocessedRewards preprocess_outcome(const Matrix& x, const Vector& r, const Decisions& a,
                                              const Vector& propensity, bool remove_main_effect = true) {
  PreprocessedRewards out;
  Vector resid = r;
  if (remove_main_effect) {
    const MainEffectFit fit = fit_main_effect(x, r);
    resid = r - fit.predict(x);
    out.main_effect_coefs = fit.coefs;
    out.rank_deficient = fit.rank_deficient;
    // Residuals at rounding level are exact zeros (sgn 0 -> +1 downstream).
    const double snap = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, r.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < resid.size(); ++i)
      if (std::abs(resid[i]) <= snap) resid[i] = 0.0;
  }
  out.weights = resid.cwiseAbs().cwiseQuotient(propensity);
  out.labels.resize(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) out.labels[i] = a[i] * sgn(resid[i]);
  return out;
}

inline PreprocessedRewards preprocess_rewards(const TrialDataset& data, Eigen::Index outcome_index,
                                              bool remove_main_effect = true) {
  data.validate();
  require(outcome_index >= 0 && outcome_index < data.K(), "preprocess_rewards: outcome index out of range");
  return preprocess_outcome(data.X, data.R.col(outcome_index), data.A, data.propensity, remove_main_effect);
}

// ---------------------------------------------------------------------------
// Outcome similarity and fusion targets

inline double pearson(const Vector& a, const Vector& b) {
  require(a.size() == b.size() && a.size() >= 2, "pearson: need equal-length vectors of size >= 2");
  const Vector ca = a.array() - a.mean();
  const Vector cb = b.array() - b.mean();
  const double sa = ca.squaredNorm(), sb = cb.squaredNorm();
  if (!(sa > 0.0) || !(sb > 0.0)) throw Error("pearson: zero-variance column, correlation undefined");
  return ca.dot(cb) / std::sqrt(sa * sb);
}

/// Omega_1k = corr(R_1, R_k), k = 2..K.
inline Vector outcome_weights(const TrialDataset& data) {
  require(data.K() >= 2, "outcome_weights: need at least one secondary outcome");
  Vector omega(data.K() - 1);
  for (Eigen::Index k = 1; k < data.K(); ++k) {
    try {
      omega[k - 1] = pearson(data.R.col(0), data.R.col(k));
    } catch (const Error&) {
      throw Error("outcome_weights: outcome column " + std::to_string(k) + " or the primary has zero variance");
    }
  }
  return omega;
}

/// Pre-estimated rules for the secondary outcomes, with the sample sizes they
/// were learned from.
struct SecondaryRuleSet {
  std::vector<BinaryRule> rules;
  std::vector<long> source_sizes;

  std::size_t size() const noexcept { return rules.size(); }
  bool empty() const noexcept { return rules.empty(); }
};

/// Secondary-rule decisions on the training covariates (n x (K-1), entries
/// +-1) with nonnegative weights; a negative Omega_k is flipped together with
/// its rule's sign.
struct FusionTargets {
  Vector omega;
  Matrix signs;

  bool empty() const noexcept { return omega.size() == 0; }
};

inline FusionTargets fusion_targets(const SecondaryRuleSet& rules, const Vector& omega, const Matrix& x) {
  require(static_cast<Eigen::Index>(rules.size()) == omega.size(),
          "fusion: number of secondary rules (" + std::to_string(rules.size()) + ") != omega length (" +
              std::to_string(omega.size()) + ")");
  FusionTargets t;
  t.omega = omega.cwiseAbs();
  t.signs.resize(x.rows(), omega.size());
  for (Eigen::Index k = 0; k < omega.size(); ++k) {
    require(std::isfinite(omega[k]), "fusion: non-finite omega");
    const Decisions d = rules.rules[static_cast<std::size_t>(k)](x);
    require(d.size() == x.rows(), "fusion: rule returned the wrong number of decisions");
    const double flip = omega[k] < 0.0 ? -1.0 : 1.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      require(d[i] == 1 || d[i] == -1, "fusion: secondary rule returned a value outside {-1,+1}");
      t.signs(i, k) = flip * d[i];
    }
  }
  return t;
}

/// R~_i = R_i1 + mu * pi_i * sum_k Omega_k * sgn(A_i f~_k(X_i)).
inline Vector pseudo_outcomes(const TrialDataset& data, const FusionTargets& targets, double mu) {
  Vector out = data.R.col(0);
  if (mu == 0.0) return out;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    double agree = 0.0;
    for (Eigen::Index k = 0; k < targets.omega.size(); ++k)
      agree += targets.omega[k] * (data.A[i] * targets.signs(i, k));
    out[i] += mu * data.propensity[i] * agree;
  }
  return out;
}

inline Vector pseudo_outcomes(const TrialDataset& data, const SecondaryRuleSet& rules, double mu,
                              const Vector& omega) {
  return pseudo_outcomes(data, fusion_targets(rules, omega, data.X), mu);
}

// ---------------------------------------------------------------------------
// Fit configuration

struct FitConfig {
  Method method = Method::SepL;
  double lambda = 0.0;
  double mu = 0.0;
  double kappa = 1.0;
  Vector omega;
  OptimizerSettings optimizer;
  bool remove_main_effect = true;
  int extra_starts = 0;            // FITR-Ramp multi-start count
  std::uint64_t start_seed = 0;

  void validate(std::size_t n_rules) const {
    require(std::isfinite(lambda) && lambda >= 0.0, "lambda must be >= 0");
    require(std::isfinite(mu) && mu >= 0.0, "mu must be >= 0");
    require(extra_starts >= 0, "extra_starts must be >= 0");
    if (method == Method::FitrRamp) require(std::isfinite(kappa) && kappa > 0.0, "kappa must be > 0");
    if (method != Method::SepL) {
      require(n_rules > 0, to_string(method) + " needs at least one secondary rule");
      require(static_cast<std::size_t>(omega.size()) == n_rules,
              "omega length (" + std::to_string(omega.size()) + ") must match the number of secondary rules (" +
                  std::to_string(n_rules) + ")");
    }
    optimizer.validate();
  }
};

// ---------------------------------------------------------------------------
// Training objective

/// How decision values depend on the parameters theta = (coefs, b):
/// Representer uses f = G alpha + b with penalty alpha'G alpha; Primal (linear
/// kernel only) uses f = X w + b with penalty w'w. For the linear kernel the
/// two agree under w = X' alpha.
enum class Parameterization { Representer, Primal };

class TrainingObjective {
 public:
  TrainingObjective(Matrix design, Parameterization param, bool intercept, double lambda,
                    PreprocessedRewards terms, double mu = 0.0, double kappa = 1.0, FusionTargets targets = {},
                    bool ramp = false)
      : design_(std::move(design)),
        param_(param),
        intercept_(intercept),
        lambda_(lambda),
        weights_(std::move(terms.weights)),
        labels_(terms.labels.cast<double>()),
        mu_(mu),
        kappa_(kappa),
        targets_(std::move(targets)),
        ramp_(ramp) {
    require(design_.rows() == weights_.size(), "objective: design rows must match the sample size");
    if (ramp_) require(targets_.signs.rows() == design_.rows(), "objective: fusion targets size mismatch");
    inv_n_ = 1.0 / static_cast<double>(design_.rows());
  }

  Eigen::Index dim() const noexcept { return design_.cols() + (intercept_ ? 1 : 0); }
  Eigen::Index coef_dim() const noexcept { return design_.cols(); }
  bool has_gradient() const noexcept { return !ramp_; }
  bool intercept() const noexcept { return intercept_; }
  Parameterization parameterization() const noexcept { return param_; }

  double intercept_of(const Vector& theta) const { return intercept_ ? theta[coef_dim()] : 0.0; }

  Vector decision_values(const Vector& theta) const {
    check_dim(theta);
    return (design_ * theta.head(coef_dim())).array() + intercept_of(theta);
  }

  double value(const Vector& theta) const {
    check_dim(theta);
    const auto coefs = theta.head(coef_dim());
    const Vector mt = design_ * coefs;
    const double b = intercept_of(theta);
    const double pen = param_ == Parameterization::Representer ? coefs.dot(mt) : coefs.squaredNorm();
    double loss = 0.0;
    double fusion = 0.0;
    for (Eigen::Index i = 0; i < mt.size(); ++i) {
      const double f = mt[i] + b;
      if (!std::isfinite(f)) throw NonFiniteError("objective: non-finite decision value", i);
      loss += weights_[i] * logistic_loss(labels_[i] * f);
      if (ramp_) fusion += ramp_term(i, f);
    }
    const double total = inv_n_ * loss + lambda_ * pen + mu_ * inv_n_ * fusion;
    if (!std::isfinite(total)) throw NonFiniteError("objective: non-finite value", -1);
    return total;
  }

  double operator()(const Vector& theta) const { return value(theta); }

  /// Value and analytic gradient; only for the smooth objectives.
  double operator()(const Vector& theta, Vector& grad) const {
    require(!ramp_, "objective: the ramp objective has no gradient");
    check_dim(theta);
    const auto coefs = theta.head(coef_dim());
    const Vector mt = design_ * coefs;
    const double b = intercept_of(theta);
    Vector df(mt.size());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < mt.size(); ++i) {
      const double f = mt[i] + b;
      if (!std::isfinite(f)) throw NonFiniteError("objective: non-finite decision value", i);
      const double t = labels_[i] * f;
      loss += weights_[i] * logistic_loss(t);
      df[i] = inv_n_ * weights_[i] * labels_[i] * logistic_slope(t);
    }
    grad.resize(dim());
    double pen = 0.0;
    if (param_ == Parameterization::Representer) {
      pen = coefs.dot(mt);
      grad.head(coef_dim()) = design_ * (df + 2.0 * lambda_ * coefs);  // G symmetric
    } else {
      pen = coefs.squaredNorm();
      grad.head(coef_dim()) = design_.transpose() * df + 2.0 * lambda_ * coefs;
    }
    if (intercept_) grad[coef_dim()] = df.sum();
    return inv_n_ * loss + lambda_ * pen;
  }

  /// Scalar restriction t -> value(theta + t*dir) from two design products.
  auto along(const Vector& theta, const Vector& dir) const {
    check_dim(theta);
    check_dim(dir);
    const auto c0 = theta.head(coef_dim());
    const auto c1 = dir.head(coef_dim());
    Vector m0 = design_ * c0;
    Vector m1 = design_ * c1;
    double p0, p1, p2;
    if (param_ == Parameterization::Representer) {
      p0 = c0.dot(m0);
      p1 = c0.dot(m1);
      p2 = c1.dot(m1);
    } else {
      p0 = c0.squaredNorm();
      p1 = c0.dot(c1);
      p2 = c1.squaredNorm();
    }
    m0.array() += intercept_of(theta);
    m1.array() += intercept_of(dir);
    return [this, f0 = std::move(m0), f1 = std::move(m1), p0, p1, p2](double t) {
      double loss = 0.0;
      double fusion = 0.0;
      for (Eigen::Index i = 0; i < f0.size(); ++i) {
        const double f = f0[i] + t * f1[i];
        loss += weights_[i] * logistic_loss(labels_[i] * f);
        if (ramp_) fusion += ramp_term(i, f);
      }
      return inv_n_ * loss + lambda_ * (p0 + 2.0 * t * p1 + t * t * p2) + mu_ * inv_n_ * fusion;
    };
  }

 private:
  void check_dim(const Vector& theta) const {
    if (theta.size() != dim())
      throw Error("objective: parameter vector has size " + std::to_string(theta.size()) + ", expected " +
                  std::to_string(dim()));
  }

  double ramp_term(Eigen::Index i, double f) const {
    double s = 0.0;
    for (Eigen::Index k = 0; k < targets_.omega.size(); ++k)
      s += targets_.omega[k] * ramp_loss(f * targets_.signs(i, k), kappa_);
    return s;
  }

  Matrix design_;
  Parameterization param_;
  bool intercept_;
  double lambda_;
  Vector weights_;
  Vector labels_;
  double mu_;
  double kappa_;
  FusionTargets targets_;
  bool ramp_;
  double inv_n_ = 1.0;
};

/// Builds the configured training objective: SepL and FITR-IntL are weighted
/// logistic problems (IntL on the re-centred pseudo outcome), FITR-Ramp adds
/// the ramp fusion penalty to the SepL term. With mu = 0 the fusion term
/// vanishes and FITR-Ramp is the (smooth) SepL objective.
inline TrainingObjective make_objective(const TrialDataset& data, const FitConfig& config,
                                        const SecondaryRuleSet& rules, Matrix design, Parameterization param,
                                        bool intercept) {
  data.validate();
  config.validate(rules.size());
  const Method effective = (config.method == Method::FitrRamp && config.mu == 0.0) ? Method::SepL : config.method;
  switch (effective) {
    case Method::SepL:
      return TrainingObjective(std::move(design), param, intercept, config.lambda,
                               preprocess_outcome(data.X, data.R.col(0), data.A, data.propensity,
                                                  config.remove_main_effect));
    case Method::FitrIntL: {
      const Vector pseudo = pseudo_outcomes(data, fusion_targets(rules, config.omega, data.X), config.mu);
      return TrainingObjective(std::move(design), param, intercept, config.lambda,
                               preprocess_outcome(data.X, pseudo, data.A, data.propensity,
                                                  config.remove_main_effect));
    }
    case Method::FitrRamp:
      return TrainingObjective(std::move(design), param, intercept, config.lambda,
                               preprocess_outcome(data.X, data.R.col(0), data.A, data.propensity,
                                                  config.remove_main_effect),
                               config.mu, config.kappa, fusion_targets(rules, config.omega, data.X), true);
  }
  throw Error("unknown method");
}

/// Objective (and gradient for the smooth methods) at alpha_b = (alpha, b) in
/// the representer parameterization over the precomputed Gram matrix.
inline std::pair<double, std::optional<Vector>> objective_value_and_grad(const Vector& alpha_b,
                                                                         const TrialDataset& data,
                                                                         const FitConfig& config,
                                                                         const SecondaryRuleSet& rules,
                                                                         const Matrix& gram) {
  require(gram.rows() == data.n() && gram.cols() == data.n(), "objective: Gram matrix must be n x n");
  const TrainingObjective obj = make_objective(data, config, rules, gram, Parameterization::Representer, true);
  if (!obj.has_gradient()) return {obj.value(alpha_b), std::nullopt};
  Vector grad;
  const double v = obj(alpha_b, grad);
  return {v, std::move(grad)};
}

}  // namespace fitr

#endif  // FITR_OBJECTIVES_HPP
