#ifndef FITR_CLI_CSV_HPP
#define FITR_CLI_CSV_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fitr/core.hpp"
#include "fitr/dataset.hpp"

namespace fitr::cli {

/// Fixed numeric formatting for every CSV cell: 9 significant digits,
/// '.' separator, "inf"/"nan" spelled out.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line per row

  std::ptrdiff_t column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<std::ptrdiff_t>(j);
    return -1;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  if (line.find('"') != std::string::npos)
    throw Error("line " + std::to_string(line_no) + ": quoted CSV fields are not supported");
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/// Reads a comma-separated file with a header row. Blank lines and lines
/// starting with '#' are skipped.
inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty() || line[0] == '#') continue;
    auto cells = detail::split_csv_line(line, line_no);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw Error(path + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                  " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(line_no);
  }
  if (!have_header) throw Error(path + ": missing header row");
  return t;
}

inline double parse_cell(const CsvTable& t, std::size_t row, std::size_t col) {
  const std::string& s = t.rows[row][col];
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v))
    throw Error("row " + std::to_string(row + 1) + " (line " + std::to_string(t.line_numbers[row]) + "), column '" +
                t.header[col] + "': '" + s + "' is not a finite number");
  return v;
}

/// LF-terminated writer that puts the manifest hash on the first line.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& manifest_hash) : out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot open '" + path + "' for writing");
    out_ << "# manifest_hash: " << manifest_hash << '\n';
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (j) out_ << ',';
      out_ << cells[j];
    }
    out_ << '\n';
  }

  void close() {
    out_.flush();
    if (!out_) throw Error("write failed");
  }

 private:
  std::ofstream out_;
};

/// Column layout of a trial CSV.
struct DatasetColumns {
  std::vector<std::string> covariates;  // empty: every column not claimed below
  std::string treatment = "A";
  std::vector<std::string> outcomes;    // empty: columns named R1, R2, ...
  std::string propensity = "propensity";
};

struct LoadedDataset {
  TrialDataset data;
  std::vector<std::string> covariate_names;
  std::vector<std::string> outcome_names;
  bool remapped_treatment = false;  // input used {0,1}
  bool propensity_from_file = false;
};

namespace detail {

inline bool is_outcome_name(const std::string& s) {
  if (s.size() < 2 || s[0] != 'R') return false;
  for (std::size_t i = 1; i < s.size(); ++i)
    if (s[i] < '0' || s[i] > '9') return false;
  return true;
}

inline std::size_t require_column(const CsvTable& t, const std::string& name, const std::string& path) {
  const auto j = t.column(name);
  if (j < 0) throw Error(path + ": missing column '" + name + "'");
  return static_cast<std::size_t>(j);
}

}  // namespace detail

/// Parses a trial CSV. Treatments may be coded {-1,+1} or {0,1} (0 -> -1);
/// a missing propensity column uses `default_propensity` for every row.
inline LoadedDataset load_dataset(const std::string& path, const DatasetColumns& cols = {},
                                  double default_propensity = 0.5) {
  const CsvTable t = read_csv(path);
  LoadedDataset out;

  const std::size_t a_col = detail::require_column(t, cols.treatment, path);
  std::vector<std::size_t> r_cols;
  if (cols.outcomes.empty()) {
    for (std::size_t j = 0; j < t.header.size(); ++j)
      if (detail::is_outcome_name(t.header[j])) {
        r_cols.push_back(j);
        out.outcome_names.push_back(t.header[j]);
      }
    if (r_cols.empty()) throw Error(path + ": no outcome columns (expected R1, R2, ... or an explicit list)");
  } else {
    for (const auto& name : cols.outcomes) {
      r_cols.push_back(detail::require_column(t, name, path));
      out.outcome_names.push_back(name);
    }
  }
  const auto p_idx = t.column(cols.propensity);
  out.propensity_from_file = p_idx >= 0;

  std::vector<std::size_t> x_cols;
  if (cols.covariates.empty()) {
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      const bool claimed = j == a_col || static_cast<std::ptrdiff_t>(j) == p_idx ||
                           std::find(r_cols.begin(), r_cols.end(), j) != r_cols.end();
      if (!claimed) {
        x_cols.push_back(j);
        out.covariate_names.push_back(t.header[j]);
      }
    }
  } else {
    for (const auto& name : cols.covariates) {
      x_cols.push_back(detail::require_column(t, name, path));
      out.covariate_names.push_back(name);
    }
  }
  if (x_cols.empty()) throw Error(path + ": no covariate columns");

  const auto n = static_cast<Eigen::Index>(t.rows.size());
  TrialDataset& d = out.data;
  d.X.resize(n, static_cast<Eigen::Index>(x_cols.size()));
  d.R.resize(n, static_cast<Eigen::Index>(r_cols.size()));
  d.A.resize(n);
  d.propensity = Vector::Constant(n, default_propensity);

  bool saw_zero = false, saw_minus = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < x_cols.size(); ++j)
      d.X(i, static_cast<Eigen::Index>(j)) = parse_cell(t, row, x_cols[j]);
    for (std::size_t j = 0; j < r_cols.size(); ++j)
      d.R(i, static_cast<Eigen::Index>(j)) = parse_cell(t, row, r_cols[j]);
    const double a = parse_cell(t, row, a_col);
    if (a != 1.0 && a != -1.0 && a != 0.0)
      throw Error("row " + std::to_string(i + 1) + ", column '" + cols.treatment + "': treatment " + t.rows[row][a_col] +
                  " is not in {-1,+1} or {0,1}");
    saw_zero |= a == 0.0;
    saw_minus |= a == -1.0;
    if (saw_zero && saw_minus)
      throw Error("row " + std::to_string(i + 1) + ", column '" + cols.treatment +
                  "': treatments mix the {-1,+1} and {0,1} codings");
    d.A[i] = a == 1.0 ? 1 : -1;
    if (p_idx >= 0) {
      const double p = parse_cell(t, row, static_cast<std::size_t>(p_idx));
      if (!(p > 0.0 && p < 1.0))
        throw Error("row " + std::to_string(i + 1) + ", column '" + cols.propensity + "': propensity " +
                    t.rows[row][static_cast<std::size_t>(p_idx)] + " is outside (0,1)");
      d.propensity[i] = p;
    }
  }
  if (!(default_propensity > 0.0 && default_propensity < 1.0))
    throw Error("default propensity must lie in (0,1)");
  out.remapped_treatment = saw_zero;
  return out;
}

/// Writes X1..Xd, A, R1..RK, propensity.
inline void write_dataset(const std::string& path, const TrialDataset& d, const std::string& manifest_hash) {
  CsvWriter w(path, manifest_hash);
  std::vector<std::string> header;
  for (Eigen::Index j = 0; j < d.d(); ++j) header.push_back("X" + std::to_string(j + 1));
  header.emplace_back("A");
  for (Eigen::Index k = 0; k < d.K(); ++k) header.push_back("R" + std::to_string(k + 1));
  header.emplace_back("propensity");
  w.row(header);
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    std::vector<std::string> cells;
    for (Eigen::Index j = 0; j < d.d(); ++j) cells.push_back(format_number(d.X(i, j)));
    cells.push_back(std::to_string(d.A[i]));
    for (Eigen::Index k = 0; k < d.K(); ++k) cells.push_back(format_number(d.R(i, k)));
    cells.push_back(format_number(d.propensity[i]));
    w.row(cells);
  }
  w.close();
}

}  // namespace fitr::cli

#endif  // FITR_CLI_CSV_HPP
