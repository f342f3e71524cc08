#ifndef FITR_CLI_COMMANDS_HPP
#define FITR_CLI_COMMANDS_HPP

#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include <json.hpp>

#include "fitr/cli/config.hpp"
#include "fitr/cli/csv.hpp"
#include "fitr/cli/model_io.hpp"
#include "fitr/eval.hpp"
#include "fitr/learner.hpp"
#include "fitr/simbench.hpp"

namespace fitr::cli {

using json = nlohmann::json;

/// Exit codes: 0 success, 1 runtime error, 2 invalid config or input,
/// 3 some replications failed (their rows are still written).
enum ExitCode : int { kOk = 0, kRuntimeError = 1, kInvalidInput = 2, kReplicationsFailed = 3 };

struct CommandOutput {
  int exit_code = kOk;
  std::vector<std::string> files;
};

namespace detail {

inline std::string prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw Error("output directory '" + dir + "' is not writable: " + (ec ? ec.message() : "not a directory"));
  return dir;
}

inline std::string join_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json ratio_json(double r) { return std::isinf(r) ? json("inf") : json(r); }

inline json mean_sd_json(const MeanSd& m) { return {{"mean", number_or_null(m.mean)}, {"sd", number_or_null(m.sd)}}; }

inline std::string cell(double v) { return std::isnan(v) ? std::string() : format_number(v); }

inline void write_manifest(const std::string& dir, const ExperimentConfig& cfg, const std::string& hash,
                           CommandOutput& out) {
  json m;
  m["manifest_hash"] = hash;
  m["version"] = kVersion;
  m["command"] = to_string(cfg.command);
  m["seed"] = cfg.seed;
  m["config"] = cfg.to_json();
  const std::string path = join_path(dir, "manifest.json");
  write_json_file(path, m);
  out.files.push_back(path);
}

inline const std::vector<std::string>& results_header() {
  static const std::vector<std::string> h{"replication_id", "scenario", "method", "kernel", "n",
                                          "ratio", "lambda", "mu", "kappa", "value_gap",
                                          "misclassification", "disagreement_k2", "disagreement_k3", "wall_ms",
                                          "test_checksum"};
  return h;
}

inline void write_results(const std::string& dir, const std::vector<ReplicationResult>& rows, bool wall_time,
                          const std::string& hash, CommandOutput& out) {
  const std::string path = join_path(dir, "results.csv");
  CsvWriter w(path, hash);
  w.row(results_header());
  for (const auto& r : rows) {
    const auto dis = [&](std::size_t k) { return k < r.disagreement.size() ? cell(r.disagreement[k]) : ""; };
    w.row({std::to_string(r.replication_id), r.scenario, to_string(r.method), r.kernel, std::to_string(r.n),
           ratio_to_string(r.ratio), cell(r.lambda), cell(r.mu), cell(r.kappa), cell(r.value_gap),
           cell(r.misclassification), dis(0), dis(1), wall_time ? format_number(r.wall_ms) : "0",
           std::to_string(r.test_checksum)});
  }
  w.close();
  out.files.push_back(path);

  const std::string tpath = join_path(dir, "timings.csv");
  CsvWriter t(tpath, hash);
  t.row({"replication_id", "scenario", "method", "ratio", "wall_ms", "failed"});
  for (const auto& r : rows)
    t.row({std::to_string(r.replication_id), r.scenario, to_string(r.method), ratio_to_string(r.ratio),
           format_number(r.wall_ms), r.failed ? "1" : "0"});
  t.close();
  out.files.push_back(tpath);
}

inline json aggregate_json(const AggregateRow& a) {
  json dis = json::array();
  for (std::size_t k = 0; k < a.disagreement.size(); ++k)
    dis.push_back({{"k", k + 2}, {"mean", number_or_null(a.disagreement[k].mean)},
                   {"sd", number_or_null(a.disagreement[k].sd)}});
  return {{"scenario", a.scenario},
          {"method", to_string(a.method)},
          {"ratio", ratio_json(a.ratio)},
          {"completed", a.completed},
          {"failed", a.failed},
          {"disagreement", dis},
          {"rmse", number_or_null(a.rmse)},
          {"value_gap", mean_sd_json(a.value_gap)},
          {"misclassification", mean_sd_json(a.misclassification)}};
}

/// P(f1* != fk*) on a seeded test set of the configured size, k = 2..K.
inline json true_disagreement(const ScenarioSpec& s, std::uint64_t seed, Eigen::Index size) {
  Rng rng = Rng::substream(seed, 0, "oracle-agreement");
  const Matrix x = generate_covariates(size, s.d(), rng);
  json out = json::array();
  const Decisions f1 = oracle_rule(s, 1)(x);
  for (int k = 2; k <= s.K(); ++k) out.push_back({{"k", k}, {"rate", disagreement_rate(f1, oracle_rule(s, k)(x))}});
  return out;
}

inline int count_failed(const std::vector<ReplicationResult>& rows) {
  int failed = 0;
  for (const auto& r : rows)
    if (r.failed) {
      ++failed;
      spdlog::warn("replication {} ({}, {}, r={}) failed: {}", r.replication_id, r.scenario, to_string(r.method),
                   ratio_to_string(r.ratio), r.error);
    }
  return failed;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// simulate / sensitivity

inline CommandOutput cmd_simulate(const ExperimentConfig& cfg) {
  cfg.validate();
  CommandOutput out;
  const std::string dir = detail::prepare_out_dir(cfg.out);
  const std::string hash = manifest_hash(cfg.to_json());
  const SimulationConfig sim = cfg.simulation();
  spdlog::info("simulate: {} n={} reps={} ratios={} methods={} workers={}", sim.scenario.name(), sim.n, sim.reps,
               sim.sorted_ratios().size(), sim.sorted_methods().size(), sim.workers);

  const std::vector<ReplicationResult> rows = run_replications(sim);
  detail::write_results(dir, rows, cfg.record_wall_time, hash, out);

  json summary;
  summary["manifest_hash"] = hash;
  summary["scenario"] = sim.scenario.name();
  summary["n"] = sim.n;
  summary["reps"] = sim.reps;
  summary["kernel"] = sim.kernel.name();
  summary["true_disagreement"] = detail::true_disagreement(sim.scenario, sim.seed, sim.test_size);
  summary["aggregates"] = json::array();
  for (const auto& a : aggregate(rows)) summary["aggregates"].push_back(detail::aggregate_json(a));
  const std::string spath = detail::join_path(dir, "summary.json");
  write_json_file(spath, summary);
  out.files.push_back(spath);
  detail::write_manifest(dir, cfg, hash, out);

  const int failed = detail::count_failed(rows);
  if (failed > 0) {
    spdlog::error("{} of {} result rows failed", failed, rows.size());
    out.exit_code = kReplicationsFailed;
  }
  return out;
}

inline CommandOutput cmd_sensitivity(const ExperimentConfig& cfg) {
  cfg.validate();
  CommandOutput out;
  const std::string dir = detail::prepare_out_dir(cfg.out);
  const std::string hash = manifest_hash(cfg.to_json());
  const SimulationConfig base = cfg.simulation();
  spdlog::info("sensitivity: {} rho values, n={} reps={} r={}", cfg.rhos.size(), base.n, base.reps,
               ratio_to_string(cfg.ratio));

  const SensitivityResult res = sensitivity_sweep(cfg.rhos, cfg.ratio, base);
  detail::write_results(dir, res.rows, cfg.record_wall_time, hash, out);

  const std::string tpath = detail::join_path(dir, "sensitivity.csv");
  CsvWriter w(tpath, hash);
  w.row({"rho", "true_agreement", "method", "agreement_mean", "agreement_sd", "rmse", "rmse_ratio",
         "misclassification_mean", "misclassification_sd", "completed", "failed"});
  json table = json::array();
  for (const auto& r : res.table) {
    w.row({format_number(r.rho), format_number(r.true_agreement), to_string(r.method),
           detail::cell(r.agreement.mean), detail::cell(r.agreement.sd), detail::cell(r.rmse),
           detail::cell(r.rmse_ratio), detail::cell(r.misclassification.mean), detail::cell(r.misclassification.sd),
           std::to_string(r.completed), std::to_string(r.failed)});
    table.push_back({{"rho", r.rho},
                     {"true_agreement", r.true_agreement},
                     {"method", to_string(r.method)},
                     {"agreement", detail::mean_sd_json(r.agreement)},
                     {"rmse", detail::number_or_null(r.rmse)},
                     {"rmse_ratio", detail::number_or_null(r.rmse_ratio)},
                     {"misclassification", detail::mean_sd_json(r.misclassification)},
                     {"completed", r.completed},
                     {"failed", r.failed}});
  }
  w.close();
  out.files.push_back(tpath);

  json summary;
  summary["manifest_hash"] = hash;
  summary["n"] = base.n;
  summary["reps"] = base.reps;
  summary["ratio"] = detail::ratio_json(cfg.ratio);
  summary["table"] = table;
  summary["aggregates"] = json::array();
  for (const auto& a : aggregate(res.rows)) summary["aggregates"].push_back(detail::aggregate_json(a));
  const std::string spath = detail::join_path(dir, "summary.json");
  write_json_file(spath, summary);
  out.files.push_back(spath);
  detail::write_manifest(dir, cfg, hash, out);

  if (detail::count_failed(res.rows) > 0) out.exit_code = kReplicationsFailed;
  return out;
}

// ---------------------------------------------------------------------------
// Real-data pathway

/// Everything a fit on a tabular dataset produces.
struct PipelineFit {
  DecisionRule rule;
  TuneResult tuning;
  Vector omega;
  SecondaryRuleSet rules;
  const CvEntry* selected = nullptr;
};

namespace detail {

inline TuningGrid grid_for(const ExperimentConfig& cfg, Eigen::Index n) {
  TuningGrid g = TuningGrid::defaults(n);
  if (!cfg.lambdas.empty()) g.lambdas = cfg.lambdas;
  if (!cfg.mus.empty()) g.mus = cfg.mus;
  if (!cfg.kappas.empty()) g.kappas = cfg.kappas;
  g.folds = cfg.folds;
  return g;
}

inline OptimizerSettings optimizer_for(const ExperimentConfig& cfg) {
  OptimizerSettings o;
  o.grad_tol = cfg.grad_tol;
  o.f_tol = cfg.f_tol;
  o.max_iters = cfg.max_iters;
  return o;
}

inline const CvEntry* find_selected(const TuneResult& t) {
  const CvEntry* hit = nullptr;
  for (const auto& e : t.table)
    if (e.config.method == t.best.method && e.config.lambda == t.best.lambda && e.config.mu == t.best.mu &&
        (t.best.method != Method::FitrRamp || e.config.kappa == t.best.kappa))
      hit = &e;
  return hit;
}

}  // namespace detail

/// Tunes and fits `method` on `data`. Secondary rules come from tuned SepL
/// fits on each secondary outcome of `external` (or of `data` itself when no
/// external sample is given); Omega is the Pearson correlation on `data`.
inline PipelineFit fit_pipeline(const TrialDataset& data, Method method, const ExperimentConfig& cfg,
                                const TrialDataset* external, std::uint64_t seed) {
  const KernelSpec kernel = cfg.kernel_policy().resolve(data.X);
  FitConfig base;
  base.optimizer = detail::optimizer_for(cfg);
  base.extra_starts = cfg.extra_starts;
  base.start_seed = Rng::substream(seed, 0, "starts").next();

  PipelineFit out{DecisionRule(kernel, Matrix(0, data.d()), Vector(0), 0.0), {}, {}, {}, nullptr};
  if (method != Method::SepL) {
    require(data.K() >= 2, to_string(method) + " needs at least one secondary outcome column");
    out.omega = outcome_weights(data);
    base.omega = out.omega;
    const TrialDataset& source = external ? *external : data;
    require(source.K() == data.K(), "external data must carry the same outcome columns");
    for (Eigen::Index k = 1; k < data.K(); ++k) {
      const TrialDataset sub = source.with_primary(k);
      const KernelSpec sub_kernel = cfg.kernel_policy().resolve(sub.X);
      FitConfig sub_base;
      sub_base.optimizer = base.optimizer;
      const std::uint64_t sub_seed = Rng::substream(seed, static_cast<std::uint64_t>(k), "secondary-cv").next();
      const FitConfig c = tune(sub, Method::SepL, detail::grid_for(cfg, sub.n()), {}, sub_kernel, sub_seed, sub_base).best;
      out.rules.rules.push_back(fit(sub, c, {}, sub_kernel).as_binary_rule("f" + std::to_string(k + 1)));
      out.rules.source_sizes.push_back(static_cast<long>(sub.n()));
    }
  }
  const std::uint64_t cv_seed = Rng::substream(seed, 0, "cv").next();
  out.tuning = tune(data, method, detail::grid_for(cfg, data.n()), out.rules, kernel, cv_seed, base);
  out.rule = fit(data, out.tuning.best, out.rules, kernel);
  out.selected = detail::find_selected(out.tuning);
  return out;
}

namespace detail {

inline LoadedDataset load_for(const ExperimentConfig& cfg, const std::string& path) {
  DatasetColumns cols;
  cols.covariates = cfg.covariates;
  cols.outcomes = cfg.outcomes;
  cols.treatment = cfg.treatment;
  LoadedDataset d = load_dataset(path, cols, cfg.propensity);
  if (d.remapped_treatment)
    spdlog::info("{}: treatment column '{}' uses {{0,1}}; remapped 0 -> -1, 1 -> +1", path, cfg.treatment);
  if (!d.propensity_from_file) spdlog::info("{}: no propensity column; using {}", path, cfg.propensity);
  d.data.validate();
  return d;
}

inline std::optional<LoadedDataset> load_external(const ExperimentConfig& cfg, const LoadedDataset& primary) {
  if (cfg.external_data.empty()) return std::nullopt;
  ExperimentConfig c = cfg;
  c.covariates = primary.covariate_names;
  c.outcomes = primary.outcome_names;
  return load_for(c, cfg.external_data);
}

inline double value_or_neg_inf(const TrialDataset& data, const Decisions& d) {
  try {
    return ipw_value(data, d);
  } catch (const NoOverlapError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace detail

inline CommandOutput cmd_fit(const ExperimentConfig& cfg) {
  cfg.validate();
  CommandOutput out;
  const std::string dir = detail::prepare_out_dir(cfg.out);
  const std::string hash = manifest_hash(cfg.to_json());
  const Method method = method_from_string(cfg.method);

  const LoadedDataset loaded = detail::load_for(cfg, cfg.data);
  const auto external = detail::load_external(cfg, loaded);
  const TrialDataset& data = loaded.data;
  spdlog::info("fit: {} on {} rows, {} covariates, {} outcomes", to_string(method), data.n(), data.d(), data.K());

  const PipelineFit pf = fit_pipeline(data, method, cfg, external ? &external->data : nullptr, cfg.seed);

  const StoredModel model{pf.rule, loaded.covariate_names, loaded.outcome_names};
  const std::string mpath = detail::join_path(dir, "model.json");
  write_json_file(mpath, model_to_json(model, hash));
  out.files.push_back(mpath);

  json report;
  report["manifest_hash"] = hash;
  report["method"] = to_string(method);
  report["n"] = data.n();
  report["covariates"] = loaded.covariate_names;
  report["outcomes"] = loaded.outcome_names;
  report["treatment_remapped"] = loaded.remapped_treatment;
  report["omega"] = vector_to_json(pf.omega);
  report["selected"] = {{"lambda", pf.tuning.best.lambda},
                        {"mu", pf.tuning.best.mu},
                        {"kappa", method == Method::FitrRamp ? json(pf.tuning.best.kappa) : json(nullptr)}};
  report["cv_value"] = pf.selected ? detail::number_or_null(pf.selected->mean_value) : json(nullptr);
  report["cv_std_error"] = pf.selected ? detail::number_or_null(pf.selected->std_error) : json(nullptr);
  json table = json::array();
  for (const auto& e : pf.tuning.table)
    table.push_back({{"stage", e.stage},
                     {"method", to_string(e.config.method)},
                     {"lambda", e.config.lambda},
                     {"mu", e.config.mu},
                     {"kappa", e.config.method == Method::FitrRamp ? json(e.config.kappa) : json(nullptr)},
                     {"mean_value", detail::number_or_null(e.mean_value)},
                     {"std_error", detail::number_or_null(e.std_error)},
                     {"failed", e.failed}});
  report["cv_table"] = table;
  const Decisions d = pf.rule.decisions(data.X);
  report["value"] = detail::number_or_null(detail::value_or_neg_inf(data, d));
  report["one_size_fits_all"] = {
      {"all_plus", detail::number_or_null(detail::value_or_neg_inf(data, Decisions::Constant(data.n(), 1)))},
      {"all_minus", detail::number_or_null(detail::value_or_neg_inf(data, Decisions::Constant(data.n(), -1)))}};
  report["fraction_treated"] = (d.array() == 1).cast<double>().mean();
  if (pf.rule.linear_weights()) {
    json coefs;
    coefs["(intercept)"] = pf.rule.intercept();
    for (std::size_t j = 0; j < loaded.covariate_names.size(); ++j)
      coefs[loaded.covariate_names[j]] = (*pf.rule.linear_weights())[static_cast<Eigen::Index>(j)];
    report["coefficients"] = coefs;
  }
  report["solver"] = {{"status", to_string(pf.rule.fit_info().status)},
                      {"objective", pf.rule.fit_info().objective},
                      {"iterations", pf.rule.fit_info().iterations}};
  const std::string rpath = detail::join_path(dir, "report.json");
  write_json_file(rpath, report);
  out.files.push_back(rpath);
  detail::write_manifest(dir, cfg, hash, out);
  return out;
}

inline CommandOutput cmd_predict(const ExperimentConfig& cfg) {
  cfg.validate();
  CommandOutput out;
  const std::string dir = detail::prepare_out_dir(cfg.out);
  const std::string hash = manifest_hash(cfg.to_json());
  const StoredModel model = model_from_json(read_json_file(cfg.model));
  const Matrix x = load_covariates(cfg.data, model.covariates);
  const Prediction p = x.rows() > 0 ? predict(model.rule, x) : Prediction{};

  const std::string path = detail::join_path(dir, "decisions.csv");
  CsvWriter w(path, hash);
  w.row({"row", "decision", "value"});
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    w.row({std::to_string(i + 1), std::to_string(p.decisions[i]), format_number(p.values[i])});
  w.close();
  out.files.push_back(path);
  detail::write_manifest(dir, cfg, hash, out);
  spdlog::info("predict: {} rows written to {}", x.rows(), path);
  return out;
}

/// With a model: the IPW value of its rule on the dataset. Without one:
/// outer cross-validation of each configured method (tuning and secondary
/// rules refit inside every training split), scored by held-out IPW value.
inline CommandOutput cmd_evaluate(const ExperimentConfig& cfg) {
  cfg.validate();
  CommandOutput out;
  const std::string dir = detail::prepare_out_dir(cfg.out);
  const std::string hash = manifest_hash(cfg.to_json());

  json report;
  report["manifest_hash"] = hash;
  const std::string cpath = detail::join_path(dir, "evaluation.csv");
  CsvWriter w(cpath, hash);

  if (!cfg.model.empty()) {
    const StoredModel model = model_from_json(read_json_file(cfg.model));
    ExperimentConfig c = cfg;
    c.covariates = model.covariates;
    const LoadedDataset loaded = detail::load_for(c, cfg.data);
    const Decisions d = model.rule.decisions(loaded.data.X);
    const double v = ipw_value(loaded.data, d);
    report["mode"] = "model";
    report["method"] = to_string(model.rule.method());
    report["n"] = loaded.data.n();
    report["value"] = v;
    w.row({"method", "value"});
    w.row({to_string(model.rule.method()), format_number(v)});
  } else {
    const LoadedDataset loaded = detail::load_for(cfg, cfg.data);
    const auto external = detail::load_external(cfg, loaded);
    const TrialDataset& data = loaded.data;
    const std::vector<Fold> folds =
        kfold_split(data.n(), cfg.outer_folds, Rng::substream(cfg.seed, 0, "outer-folds").next());
    std::vector<Method> methods;
    for (Method m : {Method::SepL, Method::FitrRamp, Method::FitrIntL})
      if (std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end()) methods.push_back(m);

    report["mode"] = "cross-validation";
    report["n"] = data.n();
    report["outer_folds"] = cfg.outer_folds;
    w.row({"method", "fold", "value"});
    json results = json::array();
    for (Method m : methods) {
      CvEntry e;
      for (std::size_t f = 0; f < folds.size(); ++f) {
        const TrialDataset train = data.subset(folds[f].train);
        const TrialDataset valid = data.subset(folds[f].valid);
        const auto seed = Rng::substream(cfg.seed, f, "outer-fit").next();
        double v = -std::numeric_limits<double>::infinity();
        try {
          const PipelineFit pf = fit_pipeline(train, m, cfg, external ? &external->data : nullptr, seed);
          v = detail::value_or_neg_inf(valid, pf.rule.decisions(valid.X));
        } catch (const Error& err) {
          spdlog::warn("evaluate: {} fold {} failed: {}", to_string(m), f + 1, err.what());
        }
        e.failed |= !std::isfinite(v);
        e.fold_values.push_back(v);
        w.row({to_string(m), std::to_string(f + 1), format_number(v)});
      }
      fitr::detail::summarize(e);
      json fv = json::array();
      for (double v : e.fold_values) fv.push_back(detail::number_or_null(v));
      results.push_back({{"method", to_string(m)},
                         {"mean_value", detail::number_or_null(e.mean_value)},
                         {"std_error", detail::number_or_null(e.std_error)},
                         {"fold_values", fv},
                         {"failed", e.failed}});
      spdlog::info("evaluate: {} cross-validated value {:.4f} (se {:.4f})", to_string(m), e.mean_value, e.std_error);
      if (e.failed) out.exit_code = kRuntimeError;
    }
    report["results"] = results;
    report["one_size_fits_all"] = {
        {"all_plus", detail::number_or_null(detail::value_or_neg_inf(data, Decisions::Constant(data.n(), 1)))},
        {"all_minus", detail::number_or_null(detail::value_or_neg_inf(data, Decisions::Constant(data.n(), -1)))}};
  }
  w.close();
  out.files.push_back(cpath);
  const std::string jpath = detail::join_path(dir, "evaluation.json");
  write_json_file(jpath, report);
  out.files.push_back(jpath);
  detail::write_manifest(dir, cfg, hash, out);
  return out;
}

/// Synthetic trial CSV drawn from a scenario (columns X1..Xd, A, R1..RK,
/// propensity).
inline CommandOutput cmd_generate(const ExperimentConfig& cfg) {
  cfg.validate();
  CommandOutput out;
  const std::string dir = detail::prepare_out_dir(cfg.out);
  const std::string hash = manifest_hash(cfg.to_json());
  const ScenarioSpec s = cfg.scenario_spec();
  const TrialDataset data = generate_dataset(s, cfg.n, Rng::substream(cfg.seed, 0, "generate").next());
  const std::string path = detail::join_path(dir, "data.csv");
  write_dataset(path, data, hash);
  out.files.push_back(path);
  detail::write_manifest(dir, cfg, hash, out);
  spdlog::info("generate: {} rows of {} (d={}) written to {}", data.n(), s.name(), s.d(), path);
  return out;
}

inline CommandOutput run_command(const ExperimentConfig& cfg) {
  switch (cfg.command) {
    case Command::Simulate: return cmd_simulate(cfg);
    case Command::Sensitivity: return cmd_sensitivity(cfg);
    case Command::Fit: return cmd_fit(cfg);
    case Command::Predict: return cmd_predict(cfg);
    case Command::Evaluate: return cmd_evaluate(cfg);
    case Command::Generate: return cmd_generate(cfg);
  }
  throw Error("unknown command");
}

}  // namespace fitr::cli

#endif  // FITR_CLI_COMMANDS_HPP
