#ifndef FITR_LEARNER_HPP
#define FITR_LEARNER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "fitr/core.hpp"
#include "fitr/dataset.hpp"
#include "fitr/eval.hpp"
#include "fitr/kernel.hpp"
#include "fitr/objectives.hpp"
#include "fitr/optim.hpp"
#include "fitr/rng.hpp"
#include "fitr/rule.hpp"

namespace fitr {

struct FitInfo {
  SolverStatus status = SolverStatus::Converged;
  double objective = 0.0;
  int iterations = 0;
  long evaluations = 0;
};

/// Fitted decision function f(x) = sum_i alpha_i k(x, anchor_i) + b; the
/// recommended treatment is sgn(f(x)) with sgn(0) = +1.
class DecisionRule {
 public:
  DecisionRule(KernelSpec kernel, Matrix anchors, Vector alpha, double intercept, Method method = Method::SepL,
               FitConfig config = {}, FitInfo info = {})
      : kernel_(std::move(kernel)),
        anchors_(std::move(anchors)),
        alpha_(std::move(alpha)),
        intercept_(intercept),
        method_(method),
        config_(std::move(config)),
        info_(info) {
    require(anchors_.rows() == alpha_.size(), "decision rule: one coefficient per anchor required");
    require(alpha_.allFinite() && std::isfinite(intercept_), "decision rule: non-finite coefficients");
    if (kernel_.kind() == KernelKind::Linear) linear_weights_ = anchors_.transpose() * alpha_;
  }

  Vector values(const Matrix& x) const {
    if (x.cols() != anchors_.cols())
      throw Error("predict: covariate dimension " + std::to_string(x.cols()) + " does not match the model's " +
                  std::to_string(anchors_.cols()));
    if (linear_weights_) return (x * *linear_weights_).array() + intercept_;
    return (gram_matrix(kernel_, x, anchors_) * alpha_).array() + intercept_;
  }

  Decisions decisions(const Matrix& x) const { return sgn(values(x)); }

  /// Sign rule sharing this model's coefficients.
  BinaryRule as_binary_rule(std::string name = {}) const {
    auto self = std::make_shared<const DecisionRule>(*this);
    return BinaryRule([self](const Matrix& x) { return self->decisions(x); },
                      name.empty() ? to_string(method_) : std::move(name));
  }

  /// Same rule with (alpha, b) multiplied by c.
  DecisionRule scaled(double c) const {
    return DecisionRule(kernel_, anchors_, c * alpha_, c * intercept_, method_, config_, info_);
  }

  const KernelSpec& kernel() const noexcept { return kernel_; }
  const Matrix& anchors() const noexcept { return anchors_; }
  const Vector& alpha() const noexcept { return alpha_; }
  double intercept() const noexcept { return intercept_; }
  Method method() const noexcept { return method_; }
  const FitConfig& config_used() const noexcept { return config_; }
  const FitInfo& fit_info() const noexcept { return info_; }
  /// w = anchors' alpha for the linear kernel.
  const std::optional<Vector>& linear_weights() const noexcept { return linear_weights_; }

 private:
  KernelSpec kernel_;
  Matrix anchors_;
  Vector alpha_;
  double intercept_;
  Method method_;
  FitConfig config_;
  FitInfo info_;
  std::optional<Vector> linear_weights_;
};

struct Prediction {
  Vector values;
  Decisions decisions;
};

inline Prediction predict(const DecisionRule& rule, const Matrix& x) {
  Prediction p;
  p.values = rule.values(x);
  p.decisions = sgn(p.values);
  return p;
}

inline double ipw_value(const TrialDataset& data, const DecisionRule& rule) {
  return ipw_value(data, rule.decisions(data.X));
}

namespace detail {

/// The linear kernel is optimized over w = X'alpha when n > d (same objective,
/// d + 1 instead of n + 1 parameters); everything else uses the representer form.
inline Parameterization choose_parameterization(const KernelSpec& kernel, const Matrix& x) {
  return (kernel.kind() == KernelKind::Linear && x.rows() > x.cols()) ? Parameterization::Primal
                                                                      : Parameterization::Representer;
}

inline Matrix design_for(const KernelSpec& kernel, const Matrix& x, Parameterization p) {
  return p == Parameterization::Primal ? x : gram_matrix(kernel, x, x);
}

struct FitOutcome {
  DecisionRule rule;
  Vector theta;  // solver coordinates, reusable as a warm start
};

inline FitOutcome fit_detailed(const TrialDataset& data, const FitConfig& config, const SecondaryRuleSet& rules,
                               const KernelSpec& kernel) {
  data.validate();
  config.validate(rules.size());
  const Parameterization param = choose_parameterization(kernel, data.X);
  Matrix design = design_for(kernel, data.X, param);
  const bool intercept = kernel.include_intercept();
  const OptimizerSettings& opt = config.optimizer;

  const TrainingObjective obj = make_objective(data, config, rules, design, param, intercept);

  Vector start = Vector::Zero(obj.dim());
  switch (opt.initial_point) {
    case InitialPointRule::WarmStart:
      require(opt.warm_start.size() == obj.dim(), "warm start has the wrong dimension");
      start = opt.warm_start;
      break;
    case InitialPointRule::Zeros:
      break;
    case InitialPointRule::Default:
      if (config.method == Method::FitrRamp) {
        FitConfig sepl = config;
        sepl.method = Method::SepL;
        const TrainingObjective smooth =
            make_objective(data, sepl, SecondaryRuleSet{}, std::move(design), param, intercept);
        start = bfgs_minimize(smooth, start, opt).x;
      }
      break;
  }

  SolverResult best;
  if (obj.has_gradient()) {
    best = bfgs_minimize(obj, start, opt);
  } else {
    best = powell_minimize(obj, start, opt);
    for (int s = 1; s <= config.extra_starts; ++s) {
      Rng rng = Rng::substream(config.start_seed, static_cast<std::uint64_t>(s), "multistart");
      Vector x0 = start;
      for (Eigen::Index j = 0; j < x0.size(); ++j) x0[j] += rng.uniform(-0.1, 0.1);
      SolverResult r = powell_minimize(obj, x0, opt);
      if (r.f < best.f) best = std::move(r);
    }
  }

  const Vector coefs = best.x.head(obj.coef_dim());
  Vector alpha = param == Parameterization::Primal
                     ? Vector(data.X.transpose().completeOrthogonalDecomposition().solve(coefs))
                     : coefs;
  FitInfo info{best.status, best.f, best.iterations, best.evaluations};
  return {DecisionRule(kernel, data.X, std::move(alpha), obj.intercept_of(best.x), config.method, config, info),
          std::move(best.x)};
}

}  // namespace detail

/// Minimizes the configured objective: BFGS for SepL and FITR-IntL, Powell
/// (plus optional perturbed restarts) for FITR-Ramp.
inline DecisionRule fit(const TrialDataset& data, const FitConfig& config, const SecondaryRuleSet& rules,
                        const KernelSpec& kernel) {
  return detail::fit_detailed(data, config, rules, kernel).rule;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct Fold {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> valid;
};

/// Seeded shuffle, then contiguous blocks; the first n % folds blocks get one
/// extra index. Index lists are returned sorted.
inline std::vector<Fold> kfold_split(Eigen::Index n, int folds, std::uint64_t seed) {
  require(folds >= 2, "kfold_split: need at least 2 folds");
  require(folds <= n, "kfold_split: more folds (" + std::to_string(folds) + ") than samples (" +
                          std::to_string(n) + ")");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng(seed);
  for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);

  std::vector<Fold> out(static_cast<std::size_t>(folds));
  const Eigen::Index base = n / folds, extra = n % folds;
  Eigen::Index pos = 0;
  for (int f = 0; f < folds; ++f) {
    const Eigen::Index len = base + (f < extra ? 1 : 0);
    auto& fold = out[static_cast<std::size_t>(f)];
    fold.valid.assign(perm.begin() + pos, perm.begin() + pos + len);
    fold.train.reserve(static_cast<std::size_t>(n - len));
    fold.train.insert(fold.train.end(), perm.begin(), perm.begin() + pos);
    fold.train.insert(fold.train.end(), perm.begin() + pos + len, perm.end());
    std::sort(fold.valid.begin(), fold.valid.end());
    std::sort(fold.train.begin(), fold.train.end());
    pos += len;
  }
  return out;
}

struct TuningGrid {
  std::vector<double> lambdas;
  std::vector<double> mus;
  std::vector<double> kappas;
  int folds = 4;

  /// lambda in {0.01, 0.05, 0.25, 1.25}/n, mu in {0, 0.1, 0.25, 0.5, 1},
  /// kappa in {0.1, 0.5, 1}, 4 folds.
  static TuningGrid defaults(Eigen::Index n) {
    const double inv = 1.0 / static_cast<double>(n);
    return {{0.01 * inv, 0.05 * inv, 0.25 * inv, 1.25 * inv}, {0.0, 0.1, 0.25, 0.5, 1.0}, {0.1, 0.5, 1.0}, 4};
  }

  void validate(Eigen::Index n) const {
    require(!lambdas.empty() && !mus.empty() && !kappas.empty(), "tuning grid lists must be non-empty");
    require(folds >= 2 && folds <= n, "tuning grid folds must be in [2, n]");
    for (double l : lambdas) require(std::isfinite(l) && l >= 0.0, "grid lambdas must be >= 0");
    for (double m : mus) require(std::isfinite(m) && m >= 0.0, "grid mus must be >= 0");
    for (double k : kappas) require(std::isfinite(k) && k > 0.0, "grid kappas must be > 0");
  }
};

struct CvEntry {
  FitConfig config;
  int stage = 1;                      // 1: lambda with SepL, 2: mu/kappa at fixed lambda
  double mean_value = 0.0;            // -inf when any fold failed
  double std_error = 0.0;             // fold-level sd / sqrt(folds)
  std::vector<double> fold_values;
  bool failed = false;
};

struct TuneResult {
  FitConfig best;
  std::vector<CvEntry> table;
};

namespace detail {

inline void summarize(CvEntry& e) {
  const auto m = static_cast<double>(e.fold_values.size());
  if (e.failed) {
    e.mean_value = -std::numeric_limits<double>::infinity();
    e.std_error = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  double mean = 0.0;
  for (double v : e.fold_values) mean += v;
  mean /= m;
  double ss = 0.0;
  for (double v : e.fold_values) ss += (v - mean) * (v - mean);
  e.mean_value = mean;
  e.std_error = m > 1 ? std::sqrt(ss / (m - 1.0)) / std::sqrt(m) : 0.0;
}

}  // namespace detail

/// Two-stage cross-validated tuning. Stage 1 picks lambda for SepL; stage 2
/// fixes it and searches mu (and kappa for FITR-Ramp). Each config is scored
/// by the mean held-out IPW value; ties go to smaller mu, then smaller
/// lambda, then larger kappa. `base` carries omega and solver settings.
inline TuneResult tune(const TrialDataset& data, Method method, const TuningGrid& grid,
                       const SecondaryRuleSet& rules, const KernelSpec& kernel, std::uint64_t seed,
                       const FitConfig& base = {}) {
  data.validate();
  grid.validate(data.n());
  const std::vector<Fold> folds = kfold_split(data.n(), grid.folds, seed);
  std::vector<TrialDataset> train, valid;
  for (const auto& f : folds) {
    train.push_back(data.subset(f.train));
    valid.push_back(data.subset(f.valid));
  }

  TuneResult out;
  std::vector<std::optional<Vector>> warm(folds.size());
  const auto score = [&](FitConfig cfg, int stage, bool warm_start) {
    CvEntry e;
    e.config = cfg;
    e.stage = stage;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      FitConfig fc = cfg;
      if (warm_start && warm[f]) {
        fc.optimizer.initial_point = InitialPointRule::WarmStart;
        fc.optimizer.warm_start = *warm[f];
      }
      try {
        auto fitted = detail::fit_detailed(train[f], fc, rules, kernel);
        e.fold_values.push_back(ipw_value(valid[f], fitted.rule));
        if (warm_start) warm[f] = std::move(fitted.theta);
      } catch (const Error&) {
        e.failed = true;
        e.fold_values.push_back(-std::numeric_limits<double>::infinity());
      }
    }
    detail::summarize(e);
    out.table.push_back(e);
    return e.mean_value;
  };

  std::vector<double> lambdas = grid.lambdas;
  std::sort(lambdas.begin(), lambdas.end());
  FitConfig best = base;
  best.method = Method::SepL;
  best.mu = 0.0;
  double best_value = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (double lam : lambdas) {
    FitConfig cfg = base;
    cfg.method = Method::SepL;
    cfg.lambda = lam;
    cfg.mu = 0.0;
    const double v = score(cfg, 1, false);
    if (!any || v > best_value) {
      best_value = v;
      best = cfg;
      any = true;
    }
  }
  if (method == Method::SepL) {
    out.best = best;
    return out;
  }

  std::vector<double> mus = grid.mus;
  std::sort(mus.begin(), mus.end());
  std::vector<double> kappas = method == Method::FitrRamp ? grid.kappas : std::vector<double>{base.kappa};
  std::sort(kappas.begin(), kappas.end(), std::greater<>());
  const double lambda = best.lambda;
  any = false;
  for (double mu : mus) {
    for (double kappa : kappas) {
      FitConfig cfg = base;
      cfg.method = method;
      cfg.lambda = lambda;
      cfg.mu = mu;
      cfg.kappa = kappa;
      const double v = score(cfg, 2, true);
      if (!any || v > best_value) {
        best_value = v;
        best = cfg;
        any = true;
      }
    }
  }
  out.best = best;
  return out;
}

}  // namespace fitr

#endif  // FITR_LEARNER_HPP
