#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "fitr/eval.hpp"
#include "fitr/scenario.hpp"
#include "fitr/simbench.hpp"

using Catch::Approx;
using namespace fitr;

namespace {

double column_corr(const Matrix& x, Eigen::Index a, Eigen::Index b) {
  const Vector ca = x.col(a).array() - x.col(a).mean();
  const Vector cb = x.col(b).array() - x.col(b).mean();
  return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

double oracle_agreement(const ScenarioSpec& s, const Matrix& x) {
  return 1.0 - disagreement_rate(oracle_rule(s, 1), oracle_rule(s, 2), x);
}

SimulationConfig small_config() {
  SimulationConfig c;
  c.n = 40;
  c.reps = 2;
  c.test_size = 2000;
  c.ratios = {0, 1, kInfiniteRatio};
  c.lambdas = {0.05 / 40, 1.25 / 40};
  c.mus = {0.0, 0.5};
  c.kappas = {0.5};
  return c;
}

}  // namespace

TEST_CASE("covariate law", "[simbench]") {
  const Eigen::Index n = 100000;
  const Matrix x = generate_covariates(n, 10, 1);
  const double tol = 4.0 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(x.col(0).mean()) < tol);
  CHECK(std::abs(x.col(1).mean()) < tol);
  CHECK(x.col(0).cwiseAbs().maxCoeff() <= 1.0);
  CHECK(column_corr(x, 2, 0) == Approx(1.0 / std::sqrt(1.64)).margin(0.01));
  CHECK(std::abs(column_corr(x, 3, 0)) < 0.01);
  CHECK(generate_covariates(50, 10, 9) == generate_covariates(50, 10, 9));
  CHECK_THROWS_AS(generate_covariates(5, 2, 1), Error);
}

TEST_CASE("trial generation", "[simbench]") {
  const auto s1 = ScenarioSpec::make(ScenarioId::S1);
  const TrialDataset data = generate_dataset(s1, 100000, 2);
  CHECK(std::abs(data.A.cast<double>().mean()) < 0.01);
  CHECK((data.propensity.array() == 0.5).all());

  // Noise = observed minus conditional mean.
  Matrix eps(data.n(), 2);
  for (Eigen::Index i = 0; i < data.n(); ++i)
    for (int k = 1; k <= 2; ++k)
      eps(i, k - 1) = data.R(i, k - 1) - s1.mean_outcome(k, data.X(i, 0), data.X(i, 1), data.A[i]);
  const Matrix centred = eps.rowwise() - eps.colwise().mean();
  const Matrix cov = centred.transpose() * centred / static_cast<double>(data.n() - 1);
  CHECK(cov(0, 0) == Approx(0.2).margin(0.01));
  CHECK(cov(1, 1) == Approx(0.2).margin(0.01));
  CHECK(cov(0, 1) == Approx(0.1).margin(0.01));

  const TrialDataset clean = generate_dataset(s1, 500, 3, true);
  for (Eigen::Index i = 0; i < clean.n(); ++i)
    CHECK(clean.R(i, 0) == s1.main_effect(1, clean.X(i, 0), clean.X(i, 1)) +
                               0.5 * clean.A[i] * (0.2 - clean.X(i, 0) - 2.0 * clean.X(i, 1)));

  // The noiseless flag changes only the outcomes.
  const TrialDataset noisy = generate_dataset(s1, 500, 3);
  CHECK(noisy.X == clean.X);
  CHECK(noisy.A == clean.A);
}

TEST_CASE("scenario catalogue", "[simbench]") {
  for (const char* name : {"S1", "S2", "S3", "S4"}) CHECK(ScenarioSpec::parse(name).K() == 2);
  for (const char* name : {"S5", "S6", "S7", "S8"}) CHECK(ScenarioSpec::parse(name).K() == 3);
  CHECK(ScenarioSpec::parse("SENS(0.7)").rho() == 0.7);
  CHECK(ScenarioSpec::parse("SENS(0.7)").name() == "SENS(0.7)");
  CHECK_THROWS_AS(ScenarioSpec::parse("S9"), Error);
  CHECK_THROWS_AS(ScenarioSpec::parse("SENS(x)"), Error);
  for (const char* name : {"S1", "S8"}) {
    const auto s = ScenarioSpec::parse(name);
    CHECK(s.noise_cov().isApprox(s.noise_cov().transpose()));
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(s.noise_cov()).eigenvalues().minCoeff() > 0.0);
    CHECK(s.d() == 10);
  }
}

TEST_CASE("oracle rules", "[simbench]") {
  const auto s1 = ScenarioSpec::make(ScenarioId::S1);
  CHECK(oracle_rule(s1, 1)(Vector(Vector::Zero(10))) == 1);
  CHECK_THROWS_AS(oracle_rule(s1, 3), Error);

  const Matrix x = generate_covariates(100000, 10, 4);
  CHECK(oracle_agreement(s1, x) == Approx(0.986).margin(0.002));
  CHECK(oracle_agreement(ScenarioSpec::make(ScenarioId::S3), x) == Approx(0.964).margin(0.003));
  CHECK(oracle_agreement(ScenarioSpec::make(ScenarioId::S4), x) == Approx(0.928).margin(0.003));
  CHECK(oracle_agreement(ScenarioSpec::sensitivity(1.0), x) == 1.0);
  CHECK(oracle_agreement(ScenarioSpec::sensitivity(0.9), x) == Approx(0.9857).margin(0.002));
  CHECK(oracle_agreement(ScenarioSpec::sensitivity(0.5), x) == Approx(0.8756).margin(0.003));

  // The sign as typeset makes every nonlinear oracle rule constant -1.
  const auto printed = ScenarioSpec::make(ScenarioId::S3).with_printed_nonlinear_sign();
  CHECK((oracle_rule(printed, 1)(x).array() == -1).all());
  CHECK((oracle_rule(printed, 2)(x).array() == -1).all());
}

TEST_CASE("oracle values", "[simbench]") {
  struct Case {
    ScenarioId id;
    int k;
    double value;
  };
  for (const Case& c : {Case{ScenarioId::S1, 1, 1.89}, Case{ScenarioId::S1, 2, 2.47}, Case{ScenarioId::S2, 1, 1.89},
                        Case{ScenarioId::S2, 2, 2.33}, Case{ScenarioId::S3, 1, 2.12}, Case{ScenarioId::S3, 2, 2.82},
                        Case{ScenarioId::S4, 1, 2.12}, Case{ScenarioId::S4, 2, 2.83}, Case{ScenarioId::S5, 3, 1.72},
                        Case{ScenarioId::S6, 3, 1.72}, Case{ScenarioId::S7, 3, 2.18}, Case{ScenarioId::S8, 3, 2.18}}) {
    const auto s = ScenarioSpec::make(c.id);
    INFO(s.name() << " outcome " << c.k);
    CHECK(mc_value(oracle_rule(s, c.k), s, c.k, 100000, 5) == Approx(c.value).margin(0.03));
  }
}

TEST_CASE("ratio encoding", "[simbench]") {
  CHECK(ratio_to_string(kInfiniteRatio) == "inf");
  CHECK(ratio_to_string(4.0) == "4");
  CHECK(std::isinf(ratio_from_string("inf")));
  CHECK(ratio_from_string("0.5") == 0.5);
  CHECK_THROWS_AS(ratio_from_string("-1"), Error);
  CHECK_THROWS_AS(ratio_from_string("4x"), Error);
}

TEST_CASE("replication harness", "[simbench][property]") {
  const SimulationConfig cfg = small_config();
  const std::vector<ReplicationResult> rows = run_replications(cfg);
  REQUIRE(rows.size() == 2u * 3u * 3u);

  SECTION("rows are ordered and complete") {
    std::size_t i = 0;
    for (int rep = 0; rep < 2; ++rep)
      for (double r : {0.0, 1.0, kInfiniteRatio})
        for (Method m : {Method::SepL, Method::FitrRamp, Method::FitrIntL}) {
          const auto& row = rows[i++];
          CHECK(row.replication_id == rep);
          CHECK(row.ratio == r);
          CHECK(row.method == m);
          CHECK_FALSE(row.failed);
          CHECK(row.misclassification >= 0.0);
          CHECK(row.misclassification <= 1.0);
          REQUIRE(row.disagreement.size() == 1);
          CHECK(row.disagreement[0] >= 0.0);
          CHECK(row.disagreement[0] <= 1.0);
        }
  }
  SECTION("r = 0 degenerates to separate learning") {
    for (std::size_t i = 0; i < rows.size(); i += 9) {
      for (std::size_t j = 1; j < 3; ++j) {
        CHECK(rows[i + j].value == rows[i].value);
        CHECK(rows[i + j].misclassification == rows[i].misclassification);
        CHECK(rows[i + j].disagreement == rows[i].disagreement);
      }
    }
  }
  SECTION("methods in a replication share one test set") {
    std::set<std::uint64_t> rep0, rep1;
    for (const auto& row : rows) (row.replication_id == 0 ? rep0 : rep1).insert(row.test_checksum);
    CHECK(rep0.size() == 1);
    CHECK(rep1.size() == 1);
    CHECK(*rep0.begin() != *rep1.begin());
  }
  SECTION("reruns and worker counts give identical rows") {
    SimulationConfig threaded = cfg;
    threaded.workers = 2;
    const auto again = run_replications(threaded);
    REQUIRE(again.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(again[i].value == rows[i].value);
      CHECK(again[i].lambda == rows[i].lambda);
      CHECK(again[i].mu == rows[i].mu);
      CHECK(again[i].disagreement == rows[i].disagreement);
    }
  }
  SECTION("aggregation") {
    const auto agg = aggregate(rows);
    REQUIRE(agg.size() == 9);
    for (const auto& a : agg) {
      CHECK(a.completed == 2);
      CHECK(a.failed == 0);
      CHECK(a.rmse >= 0.0);
    }
  }
}

TEST_CASE("three-outcome scenarios report two disagreement rates", "[simbench]") {
  SimulationConfig cfg = small_config();
  cfg.scenario = ScenarioSpec::make(ScenarioId::S5);
  cfg.reps = 1;
  cfg.ratios = {kInfiniteRatio};
  cfg.methods = {Method::FitrIntL};
  const auto rows = run_replications(cfg);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].disagreement.size() == 2);
}

TEST_CASE("solver caps are not failures; invalid configs are rejected", "[simbench]") {
  SimulationConfig cfg = small_config();
  cfg.reps = 1;
  cfg.ratios = {0};
  cfg.kernel = KernelPolicy::gaussian(1.0);
  cfg.optimizer.max_iters = 1;
  CHECK_FALSE(run_replications(cfg)[0].failed);

  SimulationConfig bad = small_config();
  bad.reps = 0;
  CHECK_THROWS_AS(run_replications(bad), Error);
}

TEST_CASE("sensitivity sweep table", "[simbench]") {
  SimulationConfig base = small_config();
  base.methods = {Method::FitrRamp};
  const SensitivityResult r = sensitivity_sweep({1.0, 0.5}, 1.0, base);
  REQUIRE(r.table.size() == 4);  // SepL is added for the RMSE ratio
  CHECK(r.table[0].rho == 1.0);
  CHECK(r.table[0].method == Method::SepL);
  CHECK(r.table[0].true_agreement == 1.0);
  CHECK(r.table[0].rmse_ratio == 1.0);
  CHECK(r.table[2].true_agreement < 0.9);
  CHECK(r.rows.size() == 2u * 2u * 2u);
}
