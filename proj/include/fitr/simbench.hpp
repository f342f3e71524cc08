#ifndef FITR_SIMBENCH_HPP
#define FITR_SIMBENCH_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "fitr/core.hpp"
#include "fitr/eval.hpp"
#include "fitr/kernel.hpp"
#include "fitr/learner.hpp"
#include "fitr/rng.hpp"
#include "fitr/scenario.hpp"

namespace fitr {

/// External-sample ratio r = N_k / n; infinity substitutes the oracle rules.
inline constexpr double kInfiniteRatio = std::numeric_limits<double>::infinity();

inline std::string ratio_to_string(double r) {
  if (std::isinf(r)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", r);
  return buf;
}

inline double ratio_from_string(const std::string& s) {
  if (s == "inf" || s == "Inf" || s == "INF") return kInfiniteRatio;
  std::size_t used = 0;
  double r = 0.0;
  try {
    r = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || used == 0 || !(r >= 0.0)) throw Error("invalid external ratio '" + s + "'");
  return r;
}

/// Kernel choice for a simulation: fixed linear/Gaussian, or Gaussian with the
/// median heuristic resolved on each primary dataset.
struct KernelPolicy {
  enum class Kind { Linear, Gaussian, AutoMedian };
  Kind kind = Kind::Linear;
  double sigma = 1.0;
  bool intercept = true;

  static KernelPolicy linear(bool intercept = true) { return {Kind::Linear, 1.0, intercept}; }
  static KernelPolicy gaussian(double sigma, bool intercept = true) { return {Kind::Gaussian, sigma, intercept}; }
  static KernelPolicy auto_median(bool intercept = true) { return {Kind::AutoMedian, 1.0, intercept}; }

  KernelSpec resolve(const Matrix& x) const {
    switch (kind) {
      case Kind::Linear: return KernelSpec::linear(intercept);
      case Kind::Gaussian: return KernelSpec::gaussian(sigma, intercept);
      case Kind::AutoMedian: return KernelSpec::gaussian(median_bandwidth(x), intercept);
    }
    throw Error("unknown kernel policy");
  }

  std::string name() const {
    switch (kind) {
      case Kind::Linear: return "linear";
      case Kind::Gaussian: return "gaussian";
      case Kind::AutoMedian: return "auto-median";
    }
    return "unknown";
  }
};

struct SimulationConfig {
  ScenarioSpec scenario = ScenarioSpec::make(ScenarioId::S1);
  Eigen::Index n = 200;
  std::vector<double> ratios{0, 1, 2, 4, 8, kInfiniteRatio};
  std::vector<Method> methods{Method::SepL, Method::FitrRamp, Method::FitrIntL};
  int reps = 100;
  KernelPolicy kernel = KernelPolicy::linear();
  std::uint64_t seed = 20240601;
  Eigen::Index test_size = 100000;
  int workers = 1;
  int folds = 4;
  int extra_starts = 0;
  /// Empty lists fall back to TuningGrid::defaults(n).
  std::vector<double> lambdas, mus, kappas;
  OptimizerSettings optimizer;

  void validate() const {
    require(n >= 8, "simulation: n must be >= 8");
    require(reps >= 1, "simulation: reps must be >= 1");
    require(!ratios.empty(), "simulation: at least one external ratio is required");
    for (double r : ratios) require(r >= 0.0, "simulation: ratios must be >= 0 or inf");
    require(!methods.empty(), "simulation: at least one method is required");
    require(test_size >= 1, "simulation: test_size must be >= 1");
    require(workers >= 1, "simulation: workers must be >= 1");
    require(extra_starts >= 0, "simulation: extra_starts must be >= 0");
    grid(n).validate(n);
    optimizer.validate();
  }

  TuningGrid grid(Eigen::Index size) const {
    TuningGrid g = TuningGrid::defaults(size);
    if (!lambdas.empty()) g.lambdas = lambdas;
    if (!mus.empty()) g.mus = mus;
    if (!kappas.empty()) g.kappas = kappas;
    g.folds = folds;
    return g;
  }

  /// Ratios sorted ascending with infinity last, duplicates removed.
  std::vector<double> sorted_ratios() const {
    std::vector<double> r = ratios;
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    return r;
  }

  /// Methods in canonical order (SepL, FITR-Ramp, FITR-IntL), duplicates removed.
  std::vector<Method> sorted_methods() const {
    std::vector<Method> m;
    for (Method c : {Method::SepL, Method::FitrRamp, Method::FitrIntL})
      if (std::find(methods.begin(), methods.end(), c) != methods.end()) m.push_back(c);
    return m;
  }
};

struct ReplicationResult {
  int replication_id = 0;
  std::string scenario;
  Method method = Method::SepL;
  std::string kernel;
  Eigen::Index n = 0;
  double ratio = 0.0;
  double lambda = NAN, mu = NAN, kappa = NAN;
  double value = NAN;              // V_1 of the fitted rule on the test set
  double value_gap = NAN;          // V_1(f*) - V_1(f_hat)
  double misclassification = NAN;  // vs f_1*
  std::vector<double> disagreement;  // vs f_k*, k = 2..K
  double wall_ms = 0.0;
  std::uint64_t test_checksum = 0;
  bool failed = false;
  std::string error;
};

/// FNV-1a over the raw bytes of a matrix (column-major).
inline std::uint64_t matrix_checksum(const Matrix& x) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(x.data());
  const std::size_t len = static_cast<std::size_t>(x.size()) * sizeof(double);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct TestBed {
  Matrix x;
  std::uint64_t checksum = 0;
  std::vector<Decisions> oracle;  // f_k* decisions, k = 1..K
  double optimal_value = 0.0;
};

inline TestBed make_test_bed(const ScenarioSpec& s, Eigen::Index size, Rng& rng) {
  TestBed t;
  t.x = generate_covariates(size, s.d(), rng);
  t.checksum = matrix_checksum(t.x);
  for (int k = 1; k <= s.K(); ++k) t.oracle.push_back(oracle_rule(s, k)(t.x));
  t.optimal_value = mc_value(t.oracle[0], s, 1, t.x);
  return t;
}

inline void evaluate_into(ReplicationResult& row, const Decisions& d, const ScenarioSpec& s, const TestBed& bed) {
  row.value = mc_value(d, s, 1, bed.x);
  row.value_gap = bed.optimal_value - row.value;
  row.misclassification = disagreement_rate(d, bed.oracle[0]);
  row.disagreement.clear();
  for (int k = 2; k <= s.K(); ++k)
    row.disagreement.push_back(disagreement_rate(d, bed.oracle[static_cast<std::size_t>(k - 1)]));
}

/// All rows of one replication, ordered by (ratio, method).
inline std::vector<ReplicationResult> run_one_replication(const SimulationConfig& cfg, int rep) {
  const ScenarioSpec& s = cfg.scenario;
  const auto urep = static_cast<std::uint64_t>(rep);
  const std::vector<double> ratios = cfg.sorted_ratios();
  const std::vector<Method> methods = cfg.sorted_methods();

  ReplicationResult proto;
  proto.replication_id = rep;
  proto.scenario = s.name();
  proto.kernel = cfg.kernel.name();
  proto.n = cfg.n;

  std::vector<ReplicationResult> rows;
  const auto fail_all = [&](const std::string& what) {
    rows.clear();
    for (double r : ratios)
      for (Method m : methods) {
        ReplicationResult row = proto;
        row.ratio = r;
        row.method = m;
        row.failed = true;
        row.error = what;
        rows.push_back(row);
      }
    return rows;
  };

  try {
    Rng primary_rng = Rng::substream(cfg.seed, urep, "primary");
    const TrialDataset data = generate_dataset(s, cfg.n, primary_rng);
    Rng test_rng = Rng::substream(cfg.seed, urep, "test");
    const TestBed bed = make_test_bed(s, cfg.test_size, test_rng);
    proto.test_checksum = bed.checksum;
    const KernelSpec kernel = cfg.kernel.resolve(data.X);
    const Vector omega = outcome_weights(data);
    const TuningGrid grid = cfg.grid(cfg.n);
    const std::uint64_t cv_seed = Rng::substream(cfg.seed, urep, "cv").next();

    FitConfig base;
    base.omega = omega;
    base.optimizer = cfg.optimizer;
    base.extra_starts = cfg.extra_starts;
    base.start_seed = Rng::substream(cfg.seed, urep, "starts").next();

    // Separate learning does not depend on the external rules: fit it once.
    auto t0 = Clock::now();
    const FitConfig sepl_cfg = tune(data, Method::SepL, grid, {}, kernel, cv_seed, base).best;
    const DecisionRule sepl_rule = fit(data, sepl_cfg, {}, kernel);
    const Decisions sepl_decisions = sepl_rule.decisions(bed.x);
    const double sepl_ms = elapsed_ms(t0);

    // External datasets: one sample of the largest finite size per secondary
    // outcome; a ratio r uses its first r*n rows, so the curves are nested.
    double max_ratio = 0.0;
    for (double r : ratios)
      if (std::isfinite(r)) max_ratio = std::max(max_ratio, r);
    const auto max_external = static_cast<Eigen::Index>(std::ceil(max_ratio * static_cast<double>(cfg.n)));
    std::vector<TrialDataset> external;
    for (int k = 2; k <= s.K() && max_external > 0; ++k) {
      Rng ext_rng = Rng::substream(cfg.seed, urep, "external", static_cast<std::uint64_t>(k));
      external.push_back(generate_dataset(s, max_external, ext_rng).with_primary(k - 1));
    }

    for (double r : ratios) {
      SecondaryRuleSet rules;
      double rules_ms = 0.0;
      if (std::isinf(r)) {
        for (int k = 2; k <= s.K(); ++k) {
          rules.rules.push_back(oracle_rule(s, k));
          rules.source_sizes.push_back(-1);
        }
      } else if (r > 0.0) {
        const auto size = static_cast<Eigen::Index>(std::ceil(r * static_cast<double>(cfg.n)));
        auto t1 = Clock::now();
        for (int k = 2; k <= s.K(); ++k) {
          std::vector<Eigen::Index> idx(static_cast<std::size_t>(size));
          for (Eigen::Index i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = i;
          const TrialDataset ext = external[static_cast<std::size_t>(k - 2)].subset(idx);
          const KernelSpec ext_kernel = cfg.kernel.resolve(ext.X);
          const std::uint64_t ext_seed =
              Rng::substream(cfg.seed, urep, "external-cv", static_cast<std::uint64_t>(k)).next();
          FitConfig ext_base;
          ext_base.optimizer = cfg.optimizer;
          const FitConfig ext_cfg = tune(ext, Method::SepL, cfg.grid(size), {}, ext_kernel, ext_seed, ext_base).best;
          rules.rules.push_back(fit(ext, ext_cfg, {}, ext_kernel).as_binary_rule("f" + std::to_string(k)));
          rules.source_sizes.push_back(static_cast<long>(size));
        }
        rules_ms = elapsed_ms(t1);
      }

      for (Method m : methods) {
        ReplicationResult row = proto;
        row.ratio = r;
        row.method = m;
        if (m == Method::SepL || rules.empty()) {
          // r = 0 leaves nothing to fuse: every method is separate learning.
          row.lambda = sepl_cfg.lambda;
          row.mu = 0.0;
          row.kappa = m == Method::FitrRamp ? sepl_cfg.kappa : NAN;
          row.wall_ms = sepl_ms;
          evaluate_into(row, sepl_decisions, s, bed);
        } else {
          auto t2 = Clock::now();
          const FitConfig best = tune(data, m, grid, rules, kernel, cv_seed, base).best;
          const DecisionRule rule = fit(data, best, rules, kernel);
          row.lambda = best.lambda;
          row.mu = best.mu;
          row.kappa = m == Method::FitrRamp ? best.kappa : NAN;
          evaluate_into(row, rule.decisions(bed.x), s, bed);
          row.wall_ms = elapsed_ms(t2) + rules_ms;
        }
        rows.push_back(std::move(row));
      }
    }
  } catch (const std::exception& e) {
    return fail_all(e.what());
  }
  return rows;
}

}  // namespace detail

/// Runs `cfg.reps` independent replications on `cfg.workers` threads. Each
/// replication draws from its own sub-streams, so the rows (ordered by
/// replication, ratio, method) do not depend on the worker count.
inline std::vector<ReplicationResult> run_replications(const SimulationConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<ReplicationResult>> per_rep(static_cast<std::size_t>(cfg.reps));
  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int rep = next++; rep < cfg.reps; rep = next++)
      per_rep[static_cast<std::size_t>(rep)] = detail::run_one_replication(cfg, rep);
  };
  const int threads = std::min(cfg.workers, cfg.reps);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  std::vector<ReplicationResult> out;
  for (auto& rows : per_rep)
    for (auto& row : rows) out.push_back(std::move(row));
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

struct MeanSd {
  double mean = NAN;
  double sd = NAN;
};

inline MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd out;
  if (v.empty()) return out;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  out.mean = m;
  out.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return out;
}

/// Per (method, ratio) aggregate over the successful replications.
struct AggregateRow {
  std::string scenario;
  Method method = Method::SepL;
  double ratio = 0.0;
  int completed = 0;
  int failed = 0;
  std::vector<MeanSd> disagreement;  // k = 2..K
  double rmse = NAN;
  MeanSd value_gap;
  MeanSd misclassification;
};

inline std::vector<AggregateRow> aggregate(const std::vector<ReplicationResult>& rows) {
  using Key = std::tuple<std::string, double, int>;
  std::map<Key, std::vector<const ReplicationResult*>> groups;
  for (const auto& r : rows) groups[{r.scenario, r.ratio, static_cast<int>(r.method)}].push_back(&r);
  std::vector<AggregateRow> out;
  for (const auto& [key, members] : groups) {
    AggregateRow a;
    a.scenario = std::get<0>(key);
    a.ratio = std::get<1>(key);
    a.method = static_cast<Method>(std::get<2>(key));
    std::vector<double> gaps, mis;
    std::vector<std::vector<double>> dis;
    for (const auto* r : members) {
      if (r->failed) {
        ++a.failed;
        continue;
      }
      ++a.completed;
      gaps.push_back(r->value_gap);
      mis.push_back(r->misclassification);
      if (dis.size() < r->disagreement.size()) dis.resize(r->disagreement.size());
      for (std::size_t k = 0; k < r->disagreement.size(); ++k) dis[k].push_back(r->disagreement[k]);
    }
    if (!gaps.empty()) a.rmse = rmse(gaps);
    a.value_gap = mean_sd(gaps);
    a.misclassification = mean_sd(mis);
    for (const auto& d : dis) a.disagreement.push_back(mean_sd(d));
    out.push_back(std::move(a));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sensitivity sweep

struct SensitivityRow {
  double rho = 1.0;
  double true_agreement = NAN;  // P(f1* f2* > 0) on the oracle test set
  Method method = Method::SepL;
  MeanSd agreement;             // P(f_hat f2* > 0)
  double rmse = NAN;
  double rmse_ratio = NAN;      // RMSE / RMSE of SepL at the same rho
  MeanSd misclassification;
  int completed = 0;
  int failed = 0;
};

struct SensitivityResult {
  std::vector<ReplicationResult> rows;
  std::vector<SensitivityRow> table;
};

/// Runs the Sensitivity(rho) family for each rho at a single external ratio.
/// `base` supplies n, reps, methods, kernel, seed and tuning settings; its
/// scenario and ratios are replaced.
inline SensitivityResult sensitivity_sweep(const std::vector<double>& rhos, double ratio, SimulationConfig base) {
  require(!rhos.empty(), "sensitivity: at least one rho is required");
  SensitivityResult out;
  for (double rho : rhos) {
    SimulationConfig cfg = base;
    cfg.scenario = ScenarioSpec::sensitivity(rho, base.scenario.d());
    cfg.ratios = {ratio};
    // The RMSE ratio column is relative to separate learning.
    if (std::find(cfg.methods.begin(), cfg.methods.end(), Method::SepL) == cfg.methods.end())
      cfg.methods.push_back(Method::SepL);
    std::vector<ReplicationResult> rows = run_replications(cfg);

    Rng oracle_rng = Rng::substream(base.seed, 0, "oracle-agreement");
    const Matrix x = generate_covariates(base.test_size, cfg.scenario.d(), oracle_rng);
    const double truth = 1.0 - disagreement_rate(oracle_rule(cfg.scenario, 1), oracle_rule(cfg.scenario, 2), x);

    double sepl_rmse = NAN;
    std::vector<SensitivityRow> block;
    for (const AggregateRow& a : aggregate(rows)) {
      SensitivityRow r;
      r.rho = rho;
      r.true_agreement = truth;
      r.method = a.method;
      r.completed = a.completed;
      r.failed = a.failed;
      if (!a.disagreement.empty()) r.agreement = {1.0 - a.disagreement[0].mean, a.disagreement[0].sd};
      r.rmse = a.rmse;
      r.misclassification = a.misclassification;
      if (a.method == Method::SepL) sepl_rmse = a.rmse;
      block.push_back(r);
    }
    for (auto& r : block) {
      r.rmse_ratio = r.rmse / sepl_rmse;
      out.table.push_back(r);
    }
    for (auto& row : rows) out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace fitr

#endif  // FITR_SIMBENCH_HPP
