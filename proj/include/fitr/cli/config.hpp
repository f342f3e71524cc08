#ifndef FITR_CLI_CONFIG_HPP
#define FITR_CLI_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fitr/core.hpp"
#include "fitr/rng.hpp"
#include "fitr/simbench.hpp"

namespace fitr::cli {

using json = nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

enum class Command { Simulate, Sensitivity, Fit, Predict, Evaluate, Generate };

inline std::string to_string(Command c) {
  switch (c) {
    case Command::Simulate: return "simulate";
    case Command::Sensitivity: return "sensitivity";
    case Command::Fit: return "fit";
    case Command::Predict: return "predict";
    case Command::Evaluate: return "evaluate";
    case Command::Generate: return "generate";
  }
  return "unknown";
}

inline Command command_from_string(const std::string& s) {
  for (Command c : {Command::Simulate, Command::Sensitivity, Command::Fit, Command::Predict, Command::Evaluate,
                    Command::Generate})
    if (to_string(c) == s) return c;
  throw Error("unknown command '" + s + "'");
}

/// Configuration error naming the offending key.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error("config field '" + field + "': " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Every command's parameters in one flat bundle; each command accepts a
/// subset of the keys and rejects the rest.
struct ExperimentConfig {
  Command command = Command::Simulate;

  // Simulation
  std::string scenario = "S1";
  bool printed_nonlinear_sign = false;
  Eigen::Index n = 200;
  int d = 10;
  int reps = 100;
  std::vector<double> ratios{0, 1, 2, 4, 8, kInfiniteRatio};
  std::vector<Method> methods{Method::SepL, Method::FitrRamp, Method::FitrIntL};
  Eigen::Index test_size = 100000;
  bool record_wall_time = false;
  // Sensitivity
  std::vector<double> rhos{1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4};
  double ratio = 4.0;

  // Kernel and tuning
  std::string kernel = "linear";  // linear | gaussian | auto-median
  double sigma = 1.0;
  bool intercept = true;
  std::vector<double> lambdas, mus, kappas;  // empty: library defaults for the sample size
  int folds = 4;
  int extra_starts = 0;
  double grad_tol = OptimizerSettings{}.grad_tol;
  double f_tol = OptimizerSettings{}.f_tol;
  int max_iters = OptimizerSettings{}.max_iters;

  // Real-data path
  std::string data;
  std::string external_data;  // optional sample for the secondary rules
  std::string model;
  std::string method = "FITR-IntL";
  std::vector<std::string> covariates;
  std::vector<std::string> outcomes;
  std::string treatment = "A";
  double propensity = 0.5;
  int outer_folds = 5;

  std::uint64_t seed = 20240601;
  int workers = 1;
  std::string out = "out";

  void validate() const;
  json to_json() const;
  KernelPolicy kernel_policy() const;
  SimulationConfig simulation() const;
  ScenarioSpec scenario_spec() const;
};

namespace detail {

inline const std::set<std::string>& allowed_keys(Command c) {
  static const std::set<std::string> common{"command", "seed", "out", "workers"};
  static const std::set<std::string> tuning{"kernel", "sigma", "intercept", "lambdas", "mus", "kappas", "folds",
                                            "extra_starts", "grad_tol", "f_tol", "max_iters"};
  static const std::set<std::string> sim{"scenario", "printed_nonlinear_sign", "n", "d", "reps", "ratios",
                                         "methods", "test_size", "record_wall_time"};
  static const std::set<std::string> data{"data", "covariates", "outcomes", "treatment", "propensity"};
  const auto join = [](std::initializer_list<const std::set<std::string>*> parts,
                       std::initializer_list<const char*> extra) {
    std::set<std::string> s;
    for (const auto* p : parts) s.insert(p->begin(), p->end());
    s.insert(extra.begin(), extra.end());
    return s;
  };
  static const std::set<std::string> simulate = join({&common, &tuning, &sim}, {});
  static const std::set<std::string> sensitivity = join({&common, &tuning, &sim}, {"rhos", "ratio"});
  static const std::set<std::string> fit = join({&common, &tuning, &data}, {"method", "external_data"});
  static const std::set<std::string> predict = join({&common}, {"model", "data"});
  static const std::set<std::string> evaluate =
      join({&common, &tuning, &data}, {"methods", "model", "external_data", "outer_folds"});
  static const std::set<std::string> generate = join({&common}, {"scenario", "printed_nonlinear_sign", "n", "d"});
  switch (c) {
    case Command::Simulate: return simulate;
    case Command::Sensitivity: return sensitivity;
    case Command::Fit: return fit;
    case Command::Predict: return predict;
    case Command::Evaluate: return evaluate;
    case Command::Generate: return generate;
  }
  return common;
}

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(key, "has the wrong type");
  }
}

inline double ratio_from_json(const json& v, const std::string& key) {
  if (v.is_string()) {
    try {
      return ratio_from_string(v.get<std::string>());
    } catch (const Error& e) {
      throw ConfigError(key, e.what());
    }
  }
  if (!v.is_number()) throw ConfigError(key, "entries must be numbers or \"inf\"");
  return v.get<double>();
}

inline json ratio_to_json(double r) {
  if (std::isinf(r)) return "inf";
  return r;
}

}  // namespace detail

/// Parses a flat JSON document for `command`. Unknown keys, wrong types and
/// out-of-range values raise ConfigError naming the field.
inline ExperimentConfig parse_config(Command command, const json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  const auto& allowed = detail::allowed_keys(command);
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError(key, "unknown key for command '" + to_string(command) + "'");

  ExperimentConfig c;
  c.command = command;
  if (j.contains("command") && detail::get_as<std::string>(j, "command") != to_string(command))
    throw ConfigError("command", "config was written for '" + j["command"].get<std::string>() + "'");
  using detail::get_as;
  if (j.contains("scenario")) c.scenario = get_as<std::string>(j, "scenario");
  if (j.contains("printed_nonlinear_sign")) c.printed_nonlinear_sign = get_as<bool>(j, "printed_nonlinear_sign");
  if (j.contains("n")) c.n = get_as<Eigen::Index>(j, "n");
  if (j.contains("d")) c.d = get_as<int>(j, "d");
  if (j.contains("reps")) c.reps = get_as<int>(j, "reps");
  if (j.contains("ratios")) {
    if (!j["ratios"].is_array()) throw ConfigError("ratios", "must be an array");
    c.ratios.clear();
    for (const auto& v : j["ratios"]) c.ratios.push_back(detail::ratio_from_json(v, "ratios"));
  }
  if (j.contains("methods")) {
    const auto names = get_as<std::vector<std::string>>(j, "methods");
    c.methods.clear();
    for (const auto& m : names) {
      try {
        c.methods.push_back(method_from_string(m));
      } catch (const Error& e) {
        throw ConfigError("methods", e.what());
      }
    }
  }
  if (j.contains("test_size")) c.test_size = get_as<Eigen::Index>(j, "test_size");
  if (j.contains("record_wall_time")) c.record_wall_time = get_as<bool>(j, "record_wall_time");
  if (j.contains("rhos")) c.rhos = get_as<std::vector<double>>(j, "rhos");
  if (j.contains("ratio")) c.ratio = detail::ratio_from_json(j["ratio"], "ratio");
  if (j.contains("kernel")) c.kernel = get_as<std::string>(j, "kernel");
  if (j.contains("sigma")) c.sigma = get_as<double>(j, "sigma");
  if (j.contains("intercept")) c.intercept = get_as<bool>(j, "intercept");
  if (j.contains("lambdas")) c.lambdas = get_as<std::vector<double>>(j, "lambdas");
  if (j.contains("mus")) c.mus = get_as<std::vector<double>>(j, "mus");
  if (j.contains("kappas")) c.kappas = get_as<std::vector<double>>(j, "kappas");
  if (j.contains("folds")) c.folds = get_as<int>(j, "folds");
  if (j.contains("extra_starts")) c.extra_starts = get_as<int>(j, "extra_starts");
  if (j.contains("grad_tol")) c.grad_tol = get_as<double>(j, "grad_tol");
  if (j.contains("f_tol")) c.f_tol = get_as<double>(j, "f_tol");
  if (j.contains("max_iters")) c.max_iters = get_as<int>(j, "max_iters");
  if (j.contains("data")) c.data = get_as<std::string>(j, "data");
  if (j.contains("external_data")) c.external_data = get_as<std::string>(j, "external_data");
  if (j.contains("model")) c.model = get_as<std::string>(j, "model");
  if (j.contains("method")) c.method = get_as<std::string>(j, "method");
  if (j.contains("covariates")) c.covariates = get_as<std::vector<std::string>>(j, "covariates");
  if (j.contains("outcomes")) c.outcomes = get_as<std::vector<std::string>>(j, "outcomes");
  if (j.contains("treatment")) c.treatment = get_as<std::string>(j, "treatment");
  if (j.contains("propensity")) c.propensity = get_as<double>(j, "propensity");
  if (j.contains("outer_folds")) c.outer_folds = get_as<int>(j, "outer_folds");
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j, "seed");
  if (j.contains("workers")) c.workers = get_as<int>(j, "workers");
  if (j.contains("out")) c.out = get_as<std::string>(j, "out");
  return c;
}

inline ExperimentConfig load_config(Command command, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(command, j);
}

inline ScenarioSpec ExperimentConfig::scenario_spec() const {
  try {
    return ScenarioSpec::parse(scenario, d).with_printed_nonlinear_sign(printed_nonlinear_sign);
  } catch (const Error& e) {
    throw ConfigError("scenario", e.what());
  }
}

inline KernelPolicy ExperimentConfig::kernel_policy() const {
  if (kernel == "linear") return KernelPolicy::linear(intercept);
  if (kernel == "gaussian") return KernelPolicy::gaussian(sigma, intercept);
  if (kernel == "auto-median") return KernelPolicy::auto_median(intercept);
  throw ConfigError("kernel", "must be linear, gaussian or auto-median");
}

inline void ExperimentConfig::validate() const {
  const auto check = [](bool ok, const char* field, const char* what) {
    if (!ok) throw ConfigError(field, what);
  };
  kernel_policy();
  check(sigma > 0.0 && std::isfinite(sigma), "sigma", "must be positive");
  check(folds >= 2, "folds", "must be >= 2");
  check(extra_starts >= 0, "extra_starts", "must be >= 0");
  check(grad_tol > 0.0, "grad_tol", "must be positive");
  check(f_tol > 0.0, "f_tol", "must be positive");
  check(max_iters >= 1, "max_iters", "must be >= 1");
  check(workers >= 1, "workers", "must be >= 1");
  for (double l : lambdas) check(std::isfinite(l) && l >= 0.0, "lambdas", "entries must be >= 0");
  for (double m : mus) check(std::isfinite(m) && m >= 0.0, "mus", "entries must be >= 0");
  for (double k : kappas) check(std::isfinite(k) && k > 0.0, "kappas", "entries must be > 0");
  check(!out.empty(), "out", "must not be empty");

  switch (command) {
    case Command::Simulate:
    case Command::Sensitivity:
      scenario_spec();
      check(n >= 8, "n", "must be >= 8");
      check(d >= 3, "d", "must be >= 3");
      check(reps >= 1, "reps", "must be >= 1");
      check(!ratios.empty(), "ratios", "must not be empty");
      for (double r : ratios) check(r >= 0.0, "ratios", "entries must be >= 0 or \"inf\"");
      check(!methods.empty(), "methods", "must not be empty");
      check(test_size >= 1, "test_size", "must be >= 1");
      if (command == Command::Sensitivity) {
        check(!rhos.empty(), "rhos", "must not be empty");
        for (double r : rhos) check(std::isfinite(r), "rhos", "entries must be finite");
        check(ratio >= 0.0, "ratio", "must be >= 0 or \"inf\"");
      }
      break;
    case Command::Fit:
      check(!data.empty(), "data", "a dataset path is required");
      try {
        method_from_string(method);
      } catch (const Error& e) {
        throw ConfigError("method", e.what());
      }
      check(propensity > 0.0 && propensity < 1.0, "propensity", "must lie in (0,1)");
      break;
    case Command::Predict:
      check(!model.empty(), "model", "a model path is required");
      check(!data.empty(), "data", "a dataset path is required");
      break;
    case Command::Evaluate:
      check(!data.empty(), "data", "a dataset path is required");
      check(!methods.empty(), "methods", "must not be empty");
      check(outer_folds >= 2, "outer_folds", "must be >= 2");
      check(propensity > 0.0 && propensity < 1.0, "propensity", "must lie in (0,1)");
      break;
    case Command::Generate:
      scenario_spec();
      check(n >= 2, "n", "must be >= 2");
      check(d >= 3, "d", "must be >= 3");
      break;
  }
}

inline SimulationConfig ExperimentConfig::simulation() const {
  SimulationConfig s;
  s.scenario = scenario_spec();
  s.n = n;
  s.ratios = ratios;
  s.methods = methods;
  s.reps = reps;
  s.kernel = kernel_policy();
  s.seed = seed;
  s.test_size = test_size;
  s.workers = workers;
  s.folds = folds;
  s.extra_starts = extra_starts;
  s.lambdas = lambdas;
  s.mus = mus;
  s.kappas = kappas;
  s.optimizer.grad_tol = grad_tol;
  s.optimizer.f_tol = f_tol;
  s.optimizer.max_iters = max_iters;
  return s;
}

/// Fully resolved config for the command (only the keys it accepts), in
/// key order. This document is what the manifest hash covers.
inline json ExperimentConfig::to_json() const {
  json all;
  all["command"] = to_string(command);
  all["scenario"] = scenario;
  all["printed_nonlinear_sign"] = printed_nonlinear_sign;
  all["n"] = n;
  all["d"] = d;
  all["reps"] = reps;
  all["ratios"] = json::array();
  for (double r : ratios) all["ratios"].push_back(detail::ratio_to_json(r));
  all["methods"] = json::array();
  for (Method m : methods) all["methods"].push_back(fitr::to_string(m));
  all["test_size"] = test_size;
  all["record_wall_time"] = record_wall_time;
  all["rhos"] = rhos;
  all["ratio"] = detail::ratio_to_json(ratio);
  all["kernel"] = kernel;
  all["sigma"] = sigma;
  all["intercept"] = intercept;
  all["lambdas"] = lambdas;
  all["mus"] = mus;
  all["kappas"] = kappas;
  all["folds"] = folds;
  all["extra_starts"] = extra_starts;
  all["grad_tol"] = grad_tol;
  all["f_tol"] = f_tol;
  all["max_iters"] = max_iters;
  all["data"] = data;
  all["external_data"] = external_data;
  all["model"] = model;
  all["method"] = method;
  all["covariates"] = covariates;
  all["outcomes"] = outcomes;
  all["treatment"] = treatment;
  all["propensity"] = propensity;
  all["outer_folds"] = outer_folds;
  all["seed"] = seed;
  all["workers"] = workers;
  all["out"] = out;

  json resolved;
  for (const auto& key : detail::allowed_keys(command))
    if (all.contains(key)) resolved[key] = all[key];
  return resolved;
}

/// 16-hex-digit FNV-1a hash of the canonical manifest text. The worker count
/// and output directory do not change results and are left out.
inline std::string manifest_hash(const json& resolved) {
  json canonical = resolved;
  canonical.erase("workers");
  canonical.erase("out");
  const std::uint64_t h = fnv1a(canonical.dump() + "|" + kVersion);
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fitr::cli

#endif  // FITR_CLI_CONFIG_HPP
