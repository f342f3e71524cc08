#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fitr/kernel.hpp"
#include "fitr/objectives.hpp"
#include "test_support.hpp"

using Catch::Approx;
using namespace fitr;
using fitr::testing::hyperplane_rule;
using fitr::testing::random_trial;
using fitr::testing::random_vector;

namespace {

// Gaussian elimination with partial pivoting; test-only oracle.
Vector solve_dense(Matrix a, Vector b) {
  const auto n = a.rows();
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index piv = c;
    for (Eigen::Index r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    a.row(c).swap(a.row(piv));
    std::swap(b[c], b[piv]);
    for (Eigen::Index r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      a.row(r) -= f * a.row(c);
      b[r] -= f * b[c];
    }
  }
  Vector x(n);
  for (Eigen::Index r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (Eigen::Index c = r + 1; c < n; ++c) s -= a(r, c) * x[c];
    x[r] = s / a(r, r);
  }
  return x;
}

SecondaryRuleSet one_rule(BinaryRule r) {
  SecondaryRuleSet s;
  s.rules.push_back(std::move(r));
  s.source_sizes.push_back(0);
  return s;
}

Vector vec1(double v) { return Vector::Constant(1, v); }

}  // namespace

TEST_CASE("logistic loss", "[objectives]") {
  CHECK(logistic_loss(0.0) == Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(logistic_loss(50.0) < 1e-20);
  CHECK(logistic_loss(50.0) == Approx(std::exp(-50.0)).epsilon(1e-12));
  CHECK(logistic_loss(-3.0) == Approx(3.0 + logistic_loss(3.0)).epsilon(1e-15));
  CHECK(std::isfinite(logistic_loss(-800.0)));
  CHECK(logistic_loss(-800.0) == Approx(800.0));
  for (double t = -5; t < 5; t += 0.37) CHECK(logistic_loss(t) > logistic_loss(t + 0.1));
}

TEST_CASE("ramp loss", "[objectives]") {
  CHECK(ramp_loss(0.25, 0.5) == 0.5);
  CHECK(ramp_loss(-7.0, 0.3) == 1.0);
  CHECK(ramp_loss(-7.0, 9.0) == 1.0);
  CHECK(ramp_loss(9.0, 9.0) == 0.0);
}

TEST_CASE("ramp loss is the 0-1 loss on products in {-1, +1} when kappa <= 1", "[objectives][property]") {
  for (double kappa : {1.0, 0.999, 0.5, 0.1, 0.01, 1e-6}) {
    CHECK(ramp_loss(-1.0, kappa) == 1.0);
    CHECK(ramp_loss(1.0, kappa) == 0.0);
  }
}

TEST_CASE("ramp loss approaches the indicator as kappa shrinks", "[objectives][property]") {
  for (double t : {-0.5, -0.002, 0.002, 0.05, 0.7, 3.0}) {
    const double target = t < 0 ? 1.0 : 0.0;
    double prev_err = 2.0;
    for (double kappa : {1.0, 0.1, 0.001}) {
      const double err = std::abs(ramp_loss(t, kappa) - target);
      CHECK(err <= prev_err);
      prev_err = err;
    }
    CHECK(prev_err == Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("fit_main_effect", "[objectives]") {
  Rng rng(21);
  Matrix x(10, 3);
  for (Eigen::Index i = 0; i < 10; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = rng.uniform(-1, 1);

  SECTION("constant response") {
    const MainEffectFit f = fit_main_effect(x, Vector::Constant(10, 4.5));
    CHECK(f.coefs[0] == Approx(4.5).epsilon(1e-12));
    CHECK(f.coefs.tail(3).norm() == Approx(0.0).margin(1e-12));
    CHECK_FALSE(f.rank_deficient);
  }
  SECTION("exact linear signal") {
    const Vector r = (3.0 * x.col(0)).array() + 2.0;
    const MainEffectFit f = fit_main_effect(x, r);
    CHECK(f.coefs[0] == Approx(2.0).margin(1e-8));
    CHECK(f.coefs[1] == Approx(3.0).margin(1e-8));
    CHECK(f.coefs[2] == Approx(0.0).margin(1e-8));
    CHECK(f.coefs[3] == Approx(0.0).margin(1e-8));
  }
  SECTION("residuals orthogonal to the design; coefficients match an independent solve") {
    for (int trial = 0; trial < 10; ++trial) {
      Matrix xs(25, 4);
      for (Eigen::Index i = 0; i < 25; ++i)
        for (Eigen::Index j = 0; j < 4; ++j) xs(i, j) = rng.uniform(-2, 2);
      const Vector r = random_vector(rng, 25, 3.0);
      const MainEffectFit f = fit_main_effect(xs, r);
      Matrix design(25, 5);
      design.col(0).setOnes();
      design.rightCols(4) = xs;
      const Vector resid = r - design * f.coefs;
      CHECK((design.transpose() * resid).cwiseAbs().maxCoeff() < 1e-8);
      const Vector oracle = solve_dense(design.transpose() * design, design.transpose() * r);
      CHECK((oracle - f.coefs).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
  SECTION("rank-deficient design sets the warning flag") {
    Matrix dup(10, 2);
    dup.col(0) = x.col(0);
    dup.col(1) = x.col(0);
    const MainEffectFit f = fit_main_effect(dup, x.col(1));
    CHECK(f.rank_deficient);
    CHECK(f.coefs.allFinite());
  }
}

TEST_CASE("preprocess_rewards applies the weight and double-flip rules", "[objectives]") {
  // Two groups on x with zero-mean outcomes: the OLS fit is identically 0.
  TrialDataset data;
  data.X.resize(4, 1);
  data.X << 0, 0, 1, 1;
  data.R.resize(4, 1);
  data.R << 1.5, -1.5, -2.0, 2.0;
  data.A.resize(4);
  data.A << -1, 1, -1, 1;
  data.propensity = Vector::Constant(4, 0.5);
  const PreprocessedRewards p = preprocess_rewards(data, 0);
  CHECK(p.weights[0] == Approx(3.0).epsilon(1e-12));
  CHECK(p.labels[0] == -1);
  CHECK(p.weights[2] == Approx(4.0).epsilon(1e-12));
  CHECK(p.labels[2] == 1);
  CHECK(p.main_effect_coefs.size() == 2);

  SECTION("all outcomes equal: zero weights, labels equal A") {
    TrialDataset flat = data;
    flat.R.setConstant(3.3);
    const PreprocessedRewards q = preprocess_rewards(flat, 0);
    CHECK(q.weights.cwiseAbs().maxCoeff() == 0.0);
    CHECK(q.labels == flat.A);
  }
  SECTION("uncentred variant uses the raw reward") {
    const PreprocessedRewards q = preprocess_rewards(data, 0, false);
    CHECK(q.weights[0] == 3.0);
    CHECK(q.labels[0] == -1);
    CHECK(q.weights[2] == 4.0);
    CHECK(q.labels[2] == 1);
  }
}

TEST_CASE("outcome_weights are Pearson correlations", "[objectives]") {
  TrialDataset data;
  data.X = Matrix::Zero(4, 1);
  data.X << 0.1, 0.2, 0.3, 0.4;
  data.A = Decisions::Ones(4);
  data.propensity = Vector::Constant(4, 0.5);
  data.R.resize(4, 3);
  data.R.col(0) << 1, 2, 3, 4;
  data.R.col(1) = data.R.col(0);
  data.R.col(2) = -data.R.col(0);
  Vector w = outcome_weights(data);
  CHECK(w[0] == Approx(1.0).epsilon(1e-15));
  CHECK(w[1] == Approx(-1.0).epsilon(1e-15));

  data.R.col(1) << 1, 3, 2, 4;
  CHECK(outcome_weights(data)[0] == Approx(0.8).epsilon(1e-14));

  data.R.col(2).setConstant(2.0);
  CHECK_THROWS_AS(outcome_weights(data), Error);
}

TEST_CASE("pseudo_outcomes", "[objectives]") {
  Rng rng(8);
  TrialDataset data = random_trial(rng, 12, 1);
  const auto rule = one_rule(hyperplane_rule(vec1(1.0), 0.1));

  CHECK(pseudo_outcomes(data, rule, 0.0, vec1(0.7)) == data.R.col(0));

  SECTION("agreeing rule adds mu * pi * Omega") {
    TrialDataset d2 = data;
    for (Eigen::Index i = 0; i < d2.n(); ++i) d2.A[i] = sgn(d2.X(i, 0));
    d2.R.col(0).setOnes();
    const auto agree = one_rule(hyperplane_rule(vec1(1.0), 0.0));
    const Vector pseudo = pseudo_outcomes(d2, agree, 0.5, vec1(1.0));
    for (Eigen::Index i = 0; i < d2.n(); ++i) CHECK(pseudo[i] == 1.25);
  }
  SECTION("negative weight flips jointly with the rule") {
    const auto flipped = one_rule(hyperplane_rule(vec1(1.0), 0.1).negated());
    CHECK(pseudo_outcomes(data, rule, 0.4, vec1(0.6)) == pseudo_outcomes(data, flipped, 0.4, vec1(-0.6)));
  }
  SECTION("length mismatch is rejected") {
    CHECK_THROWS_AS(pseudo_outcomes(data, rule, 0.4, Vector::Ones(2)), Error);
  }
}

TEST_CASE("pseudo outcome reproduces the fused 0-1 objective up to a constant", "[objectives][property]") {
  Rng rng(99);
  for (int trial = 0; trial < 12; ++trial) {
    const auto n = static_cast<Eigen::Index>(3 + trial % 6);  // 3..8
    TrialDataset data = random_trial(rng, n, 1);
    for (Eigen::Index i = 0; i < n; ++i) data.propensity[i] = rng.uniform(0.2, 0.8);
    SecondaryRuleSet rules;
    rules.rules.push_back(hyperplane_rule(vec1(1.0), rng.uniform(-0.5, 0.5)));
    rules.rules.push_back(hyperplane_rule(vec1(-1.0), rng.uniform(-0.5, 0.5)));
    Vector omega(2);
    omega << rng.uniform(0.1, 1.0), rng.uniform(-1.0, 1.0);
    const double mu = rng.uniform(0.1, 2.0);
    const Vector pseudo = pseudo_outcomes(data, rules, mu, omega);

    // Eq.-(2)-style fused objective with nonnegative weights: flip by hand.
    std::vector<Decisions> tilde;
    Vector w_eff(2);
    for (int k = 0; k < 2; ++k) {
      Decisions d = rules.rules[static_cast<std::size_t>(k)](data.X);
      if (omega[k] < 0) d = -d;
      w_eff[k] = std::abs(omega[k]);
      tilde.push_back(d);
    }
    double first_gap = 0.0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      double fused = 0.0, reduced = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int s = (mask >> i) & 1u ? 1 : -1;
        const bool miss = data.A[i] * s < 0;
        fused += miss ? data.R(i, 0) / data.propensity[i] : 0.0;
        for (int k = 0; k < 2; ++k) fused += mu * w_eff[k] * (s * tilde[static_cast<std::size_t>(k)][i] < 0 ? 1.0 : 0.0);
        reduced += miss ? pseudo[i] / data.propensity[i] : 0.0;
      }
      const double gap = (fused - reduced) / static_cast<double>(n);
      if (mask == 0) first_gap = gap;
      CHECK(gap == Approx(first_gap).margin(1e-12));
    }
  }
}

TEST_CASE("objective closed forms and mu = 0 reduction", "[objectives]") {
  Rng rng(4);
  const TrialDataset data = random_trial(rng, 9, 2);
  const Matrix gram = gram_matrix(KernelSpec::gaussian(0.8), data.X, data.X);
  const auto rules = one_rule(hyperplane_rule(Vector::Ones(2), 0.0));

  FitConfig sepl;
  sepl.lambda = 0.3;
  const auto [v0, g0] = objective_value_and_grad(Vector::Zero(10), data, sepl, {}, gram);
  const PreprocessedRewards p = preprocess_rewards(data, 0);
  CHECK(v0 == Approx(p.weights.mean() * std::log(2.0)).epsilon(1e-14));
  CHECK(g0.has_value());

  FitConfig ramp = sepl;
  ramp.method = Method::FitrRamp;
  ramp.mu = 0.0;
  ramp.kappa = 0.5;
  ramp.omega = Vector::Constant(1, 0.7);
  for (int t = 0; t < 20; ++t) {
    const Vector theta = random_vector(rng, 10, 2.0);
    const auto [vs, gs] = objective_value_and_grad(theta, data, sepl, {}, gram);
    const auto [vr, gr] = objective_value_and_grad(theta, data, ramp, rules, gram);
    CHECK(vr == vs);
    REQUIRE(gr.has_value());
    CHECK(*gr == *gs);
  }
}

TEST_CASE("analytic gradients match central differences", "[objectives][property]") {
  Rng rng(1234);
  int checked = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const TrialDataset data = random_trial(rng, 6, 2);
    const KernelSpec kernel = inst % 2 ? KernelSpec::linear() : KernelSpec::gaussian(rng.uniform(0.3, 2.0));
    const Matrix gram = gram_matrix(kernel, data.X, data.X);
    FitConfig cfg;
    cfg.lambda = rng.uniform(0.0, 0.5);
    if (inst % 3 == 0) {
      cfg.method = Method::FitrIntL;
      cfg.mu = rng.uniform(0.0, 1.0);
      cfg.omega = Vector::Constant(1, rng.uniform(-1.0, 1.0));
    }
    const auto rules = one_rule(hyperplane_rule(random_vector(rng, 2), 0.0));
    const Vector theta = random_vector(rng, 7, 1.5);
    const auto [v, grad] = objective_value_and_grad(theta, data, cfg, cfg.method == Method::SepL ? SecondaryRuleSet{} : rules, gram);
    REQUIRE(grad.has_value());
    Vector fd(7);
    const double h = 1e-5;
    for (Eigen::Index j = 0; j < 7; ++j) {
      Vector tp = theta, tm = theta;
      tp[j] += h;
      tm[j] -= h;
      const auto& r = cfg.method == Method::SepL ? SecondaryRuleSet{} : rules;
      fd[j] = (objective_value_and_grad(tp, data, cfg, r, gram).first -
               objective_value_and_grad(tm, data, cfg, r, gram).first) /
              (2 * h);
    }
    const double rel = (fd - *grad).norm() / std::max(1e-8, grad->norm());
    CHECK(rel < 1e-5);
    ++checked;
  }
  CHECK(checked == 50);
}

TEST_CASE("smooth objectives pass the midpoint convexity probe", "[objectives][property]") {
  Rng rng(55);
  const TrialDataset data = random_trial(rng, 15, 3);
  const auto rules = one_rule(hyperplane_rule(random_vector(rng, 3), 0.1));
  for (const auto& kernel : {KernelSpec::linear(), KernelSpec::gaussian(0.6)}) {
    const Matrix gram = gram_matrix(kernel, data.X, data.X);
    for (Method m : {Method::SepL, Method::FitrIntL}) {
      FitConfig cfg;
      cfg.method = m;
      cfg.lambda = 0.05;
      cfg.mu = 0.5;
      cfg.omega = Vector::Constant(1, 0.6);
      const auto& r = m == Method::SepL ? SecondaryRuleSet{} : rules;
      for (int t = 0; t < 200; ++t) {
        const Vector u = random_vector(rng, 16, 3.0), v = random_vector(rng, 16, 3.0);
        const double fm = objective_value_and_grad(Vector(0.5 * (u + v)), data, cfg, r, gram).first;
        const double fu = objective_value_and_grad(u, data, cfg, r, gram).first;
        const double fv = objective_value_and_grad(v, data, cfg, r, gram).first;
        CHECK(fm <= 0.5 * (fu + fv) + 1e-10);
      }
    }
  }
}

TEST_CASE("Omega sign flip leaves the fused objectives unchanged", "[objectives][property]") {
  Rng rng(77);
  const TrialDataset data = random_trial(rng, 14, 2, 3);
  const Matrix gram = gram_matrix(KernelSpec::gaussian(1.1), data.X, data.X);
  SecondaryRuleSet rules, flipped;
  rules.rules = {hyperplane_rule(random_vector(rng, 2), 0.2), hyperplane_rule(random_vector(rng, 2), -0.1)};
  flipped.rules = {rules.rules[0].negated(), rules.rules[1]};
  Vector omega(2), omega_f(2);
  omega << 0.4, -0.3;
  omega_f << -0.4, -0.3;
  for (Method m : {Method::FitrRamp, Method::FitrIntL}) {
    FitConfig a;
    a.method = m;
    a.lambda = 0.1;
    a.mu = 0.8;
    a.kappa = 0.5;
    a.omega = omega;
    FitConfig b = a;
    b.omega = omega_f;
    for (int t = 0; t < 50; ++t) {
      const Vector theta = random_vector(rng, 15, 1.0);
      CHECK(objective_value_and_grad(theta, data, a, rules, gram).first ==
            objective_value_and_grad(theta, data, b, flipped, gram).first);
    }
  }
}

TEST_CASE("primal and representer parameterizations agree for the linear kernel", "[objectives]") {
  Rng rng(31);
  const TrialDataset data = random_trial(rng, 20, 3);
  FitConfig cfg;
  cfg.method = Method::FitrRamp;
  cfg.lambda = 0.2;
  cfg.mu = 0.5;
  cfg.kappa = 0.5;
  cfg.omega = Vector::Constant(1, 0.9);
  const auto rules = one_rule(hyperplane_rule(random_vector(rng, 3), 0.0));
  const auto lin = KernelSpec::linear();
  const TrainingObjective dual =
      make_objective(data, cfg, rules, gram_matrix(lin, data.X, data.X), Parameterization::Representer, true);
  const TrainingObjective primal = make_objective(data, cfg, rules, data.X, Parameterization::Primal, true);
  for (int t = 0; t < 20; ++t) {
    Vector ab = random_vector(rng, 21, 0.5);
    Vector wb(4);
    wb.head(3) = data.X.transpose() * ab.head(20);
    wb[3] = ab[20];
    CHECK(primal.value(wb) == Approx(dual.value(ab)).epsilon(1e-12));
  }
}

TEST_CASE("line restriction matches direct evaluation", "[objectives]") {
  Rng rng(32);
  const TrialDataset data = random_trial(rng, 12, 2);
  FitConfig cfg;
  cfg.method = Method::FitrRamp;
  cfg.lambda = 0.2;
  cfg.mu = 0.5;
  cfg.kappa = 0.3;
  cfg.omega = Vector::Constant(1, 0.9);
  const auto rules = one_rule(hyperplane_rule(random_vector(rng, 2), 0.0));
  const auto gk = KernelSpec::gaussian(0.9);
  const TrainingObjective obj =
      make_objective(data, cfg, rules, gram_matrix(gk, data.X, data.X), Parameterization::Representer, true);
  const Vector x = random_vector(rng, 13), d = random_vector(rng, 13);
  const auto line = obj.along(x, d);
  for (double t : {-2.0, -0.3, 0.0, 0.7, 1.9}) CHECK(line(t) == Approx(obj.value(Vector(x + t * d))).epsilon(1e-12));
}

TEST_CASE("non-finite parameters are reported with an index", "[objectives]") {
  Rng rng(2);
  const TrialDataset data = random_trial(rng, 5, 2);
  const Matrix gram = gram_matrix(KernelSpec::linear(), data.X, data.X);
  Vector theta = Vector::Zero(6);
  theta[5] = NAN;
  CHECK_THROWS_AS(objective_value_and_grad(theta, data, FitConfig{}, {}, gram), NonFiniteError);
  CHECK_THROWS_AS(objective_value_and_grad(Vector::Zero(3), data, FitConfig{}, {}, gram), Error);
}

TEST_CASE("fit configuration validation", "[objectives]") {
  FitConfig c;
  c.method = Method::FitrRamp;
  c.kappa = 0.0;
  c.omega = Vector::Ones(1);
  CHECK_THROWS_AS(c.validate(1), Error);
  c.kappa = 0.5;
  CHECK_NOTHROW(c.validate(1));
  CHECK_THROWS_AS(c.validate(0), Error);
  CHECK_THROWS_AS(c.validate(2), Error);
  c.lambda = -1;
  CHECK_THROWS_AS(c.validate(1), Error);
}
