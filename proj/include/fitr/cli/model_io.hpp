#ifndef FITR_CLI_MODEL_IO_HPP
#define FITR_CLI_MODEL_IO_HPP

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fitr/cli/csv.hpp"
#include "fitr/learner.hpp"

namespace fitr::cli {

using json = nlohmann::json;

/// A fitted rule plus the column names it was trained on.
struct StoredModel {
  DecisionRule rule;
  std::vector<std::string> covariates;
  std::vector<std::string> outcomes;
};

inline json vector_to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vector vector_from_json(const json& a, const std::string& what) {
  if (!a.is_array()) throw Error("model: '" + what + "' must be an array");
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw Error("model: '" + what + "' has a non-numeric entry");
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error("write to '" + path + "' failed");
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("'" + path + "' is not valid JSON: " + e.what());
  }
}

/// Kernel spec, anchors, alpha, b, the tuned config and Omega. Doubles are
/// written with round-trip precision so a reloaded model reproduces the
/// decisions exactly.
inline json model_to_json(const StoredModel& m, const std::string& manifest_hash) {
  const DecisionRule& r = m.rule;
  json j;
  j["format"] = "fitr-model";
  j["manifest_hash"] = manifest_hash;
  j["method"] = to_string(r.method());
  j["kernel"] = {{"kind", to_string(r.kernel().kind())},
                 {"sigma", r.kernel().bandwidth() ? json(*r.kernel().bandwidth()) : json(nullptr)},
                 {"intercept", r.kernel().include_intercept()}};
  j["covariates"] = m.covariates;
  j["outcomes"] = m.outcomes;
  json anchors = json::array();
  for (Eigen::Index i = 0; i < r.anchors().rows(); ++i) anchors.push_back(vector_to_json(r.anchors().row(i)));
  j["anchors"] = anchors;
  j["alpha"] = vector_to_json(r.alpha());
  j["intercept"] = r.intercept();
  const FitConfig& c = r.config_used();
  j["config"] = {{"lambda", c.lambda}, {"mu", c.mu}, {"kappa", c.kappa}, {"omega", vector_to_json(c.omega)}};
  if (r.linear_weights()) j["linear_weights"] = vector_to_json(*r.linear_weights());
  return j;
}

inline StoredModel model_from_json(const json& j) {
  try {
    if (j.value("format", "") != "fitr-model") throw Error("model: not a fitr model file");
    const json& k = j.at("kernel");
    const bool intercept = k.at("intercept").get<bool>();
    const std::string kind = k.at("kind").get<std::string>();
    KernelSpec kernel = KernelSpec::linear(intercept);
    if (kind == "gaussian")
      kernel = KernelSpec::gaussian(k.at("sigma").get<double>(), intercept);
    else if (kind != "linear")
      throw Error("model: unknown kernel kind '" + kind + "'");

    const json& anchors = j.at("anchors");
    const Vector alpha = vector_from_json(j.at("alpha"), "alpha");
    if (!anchors.is_array() || anchors.size() != static_cast<std::size_t>(alpha.size()))
      throw Error("model: anchors and alpha lengths differ");
    const auto covariates = j.at("covariates").get<std::vector<std::string>>();
    Matrix x(alpha.size(), static_cast<Eigen::Index>(covariates.size()));
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const Vector row = vector_from_json(anchors[i], "anchors");
      if (row.size() != x.cols()) throw Error("model: anchor row width does not match the covariate list");
      x.row(static_cast<Eigen::Index>(i)) = row;
    }
    FitConfig c;
    c.method = method_from_string(j.at("method").get<std::string>());
    const json& cj = j.at("config");
    c.lambda = cj.at("lambda").get<double>();
    c.mu = cj.at("mu").get<double>();
    c.kappa = cj.at("kappa").get<double>();
    c.omega = vector_from_json(cj.at("omega"), "omega");
    return {DecisionRule(kernel, std::move(x), alpha, j.at("intercept").get<double>(), c.method, c), covariates,
            j.value("outcomes", std::vector<std::string>{})};
  } catch (const json::exception& e) {
    throw Error(std::string("model: malformed file: ") + e.what());
  }
}

/// Covariate matrix from the named columns of a CSV (other columns ignored).
inline Matrix load_covariates(const std::string& path, const std::vector<std::string>& names) {
  const CsvTable t = read_csv(path);
  std::vector<std::size_t> cols;
  for (const auto& name : names) {
    const auto j = t.column(name);
    if (j < 0) throw Error(path + ": schema mismatch, missing covariate column '" + name + "'");
    cols.push_back(static_cast<std::size_t>(j));
  }
  Matrix x(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_cell(t, i, cols[j]);
  return x;
}

}  // namespace fitr::cli

#endif  // FITR_CLI_MODEL_IO_HPP
