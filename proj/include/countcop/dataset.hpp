#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace countcop {

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open CSV file: " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("CSV file is empty: " + path);
  t.header = detail::split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != t.header.size())
      throw std::invalid_argument("CSV row " + std::to_string(t.rows.size() + 2) + " has " +
                                  std::to_string(fields.size()) + " fields, header has " +
                                  std::to_string(t.header.size()));
    t.rows.push_back(std::move(fields));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

struct ResponseRule {
  std::string column;
  std::optional<int> cap;            // values above cap merge into it
  std::vector<double> positive_bins; // 0 stays group 0; positive values are
                                     // binned by these ascending thresholds
};

struct CovariateDef {
  std::string name;
  std::string column;
  std::vector<std::string> levels;  // explicit levels, reference included
  std::string reference;
  std::vector<double> breaks;       // numeric binning alternative to levels
  bool binned = false;
};

struct Schema {
  ResponseRule response_x;
  ResponseRule response_y;
  std::vector<CovariateDef> covariates;
  std::vector<std::string> select_x;  // covariate names entering the X margin
  std::vector<std::string> select_y;
};

inline Schema parse_schema(const nlohmann::json& j) {
  Schema s;
  auto parse_response = [](const nlohmann::json& r) {
    ResponseRule rule;
    rule.column = r.at("column").get<std::string>();
    if (r.contains("cap")) rule.cap = r.at("cap").get<int>();
    if (r.contains("positive_bins")) {
      rule.positive_bins = r.at("positive_bins").get<std::vector<double>>();
      if (!std::is_sorted(rule.positive_bins.begin(), rule.positive_bins.end()))
        throw std::invalid_argument("schema: positive_bins must be ascending");
    }
    return rule;
  };
  s.response_x = parse_response(j.at("response_x"));
  s.response_y = parse_response(j.at("response_y"));
  if (j.contains("covariates")) {
    for (const auto& c : j.at("covariates")) {
      CovariateDef def;
      def.name = c.at("name").get<std::string>();
      def.column = c.contains("column") ? c.at("column").get<std::string>() : def.name;
      if (c.contains("breaks")) {
        def.binned = true;
        def.breaks = c.at("breaks").get<std::vector<double>>();
        if (!std::is_sorted(def.breaks.begin(), def.breaks.end()))
          throw std::invalid_argument("schema: breaks must be ascending for " + def.name);
        for (size_t g = 0; g <= def.breaks.size(); ++g)
          def.levels.push_back(std::to_string(g + 1));
        def.reference = c.contains("reference") ? c.at("reference").get<std::string>()
                                                : def.levels.front();
      } else {
        def.levels = c.at("levels").get<std::vector<std::string>>();
        def.reference = c.at("reference").get<std::string>();
      }
      if (def.levels.size() < 2)
        throw std::invalid_argument("schema: covariate " + def.name + " needs >= 2 levels");
      if (std::find(def.levels.begin(), def.levels.end(), def.reference) == def.levels.end())
        throw std::invalid_argument("schema: reference level '" + def.reference +
                                    "' not among levels of " + def.name);
      s.covariates.push_back(std::move(def));
    }
  }
  auto names_of = [&](const char* key) {
    std::vector<std::string> out;
    if (j.contains(key)) out = j.at(key).get<std::vector<std::string>>();
    for (const auto& n : out) {
      const bool known = std::any_of(s.covariates.begin(), s.covariates.end(),
                                     [&](const CovariateDef& d) { return d.name == n; });
      if (!known)
        throw std::invalid_argument(std::string("schema: ") + key + " names unknown covariate '" +
                                    n + "'");
    }
    return out;
  };
  s.select_x = names_of("select_x");
  s.select_y = names_of("select_y");
  return s;
}

inline Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open schema file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("schema file " + path + " is not valid JSON: " + e.what());
  }
  return parse_schema(j);
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<int> x, y;
  std::vector<std::vector<int>> cov_levels;  // [row][covariate] -> level index
  std::vector<CovariateDef> covariates;
  std::size_t dropped_rows = 0;
};

namespace detail {

inline bool is_missing(const std::string& cell) { return cell.empty() || cell == "?"; }

inline double parse_number(const std::string& cell, const std::string& column, size_t row) {
  size_t pos = 0;
  double val;
  try {
    val = std::stod(cell, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("row " + std::to_string(row) + ", column '" + column +
                                "': cannot parse '" + cell + "' as a number");
  }
  while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
  if (pos != cell.size())
    throw std::invalid_argument("row " + std::to_string(row) + ", column '" + column +
                                "': cannot parse '" + cell + "' as a number");
  return val;
}

inline int apply_response_rule(const ResponseRule& rule, double value, size_t row) {
  if (value < 0.0)
    throw std::invalid_argument("row " + std::to_string(row) + ", column '" + rule.column +
                                "': negative response " + std::to_string(value));
  double v = value;
  if (!rule.positive_bins.empty()) {
    if (v == 0.0) {
      v = 0.0;
    } else {
      int g = 1;
      for (double t : rule.positive_bins)
        if (v >= t) ++g;
      v = g;
    }
  }
  if (rule.cap) v = std::min(v, static_cast<double>(*rule.cap));
  const double rounded = std::round(v);
  if (std::fabs(v - rounded) > 1e-9)
    throw std::invalid_argument("row " + std::to_string(row) + ", column '" + rule.column +
                                "': non-integer response " + std::to_string(value) +
                                " (declare positive_bins or cap to discretize)");
  return static_cast<int>(rounded);
}

}  // namespace detail

/// Validated dataset from a CSV file: response rules applied, covariates
/// resolved to level indices, rows with missing declared cells dropped and
/// counted.  Unknown categorical levels are rejected, not coerced.
inline Dataset load_dataset(const std::string& path, const Schema& schema) {
  const CsvTable csv = read_csv(path);
  auto column_index = [&](const std::string& name) {
    const auto it = std::find(csv.header.begin(), csv.header.end(), name);
    if (it == csv.header.end())
      throw std::invalid_argument("CSV is missing declared column '" + name + "'");
    return static_cast<size_t>(it - csv.header.begin());
  };

  const size_t ix = column_index(schema.response_x.column);
  const size_t iy = column_index(schema.response_y.column);
  std::vector<size_t> icov;
  for (const auto& def : schema.covariates) icov.push_back(column_index(def.column));

  Dataset ds;
  ds.covariates = schema.covariates;
  for (size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    const size_t row_no = r + 2;  // 1-based, after the header
    bool missing = detail::is_missing(row[ix]) || detail::is_missing(row[iy]);
    for (size_t c = 0; c < icov.size() && !missing; ++c)
      missing = detail::is_missing(row[icov[c]]);
    if (missing) {
      ++ds.dropped_rows;
      continue;
    }
    const int xv = detail::apply_response_rule(schema.response_x,
                                               detail::parse_number(row[ix], schema.response_x.column, row_no),
                                               row_no);
    const int yv = detail::apply_response_rule(schema.response_y,
                                               detail::parse_number(row[iy], schema.response_y.column, row_no),
                                               row_no);
    std::vector<int> levels(schema.covariates.size());
    for (size_t c = 0; c < schema.covariates.size(); ++c) {
      const auto& def = schema.covariates[c];
      const std::string& cell = row[icov[c]];
      if (def.binned) {
        const double v = detail::parse_number(cell, def.column, row_no);
        int g = 0;
        for (double b : def.breaks)
          if (v >= b) ++g;
        levels[c] = g;
      } else {
        const auto it = std::find(def.levels.begin(), def.levels.end(), cell);
        if (it == def.levels.end())
          throw std::invalid_argument("row " + std::to_string(row_no) + ", column '" + def.column +
                                      "': unknown level '" + cell + "' for covariate " + def.name);
        levels[c] = static_cast<int>(it - def.levels.begin());
      }
    }
    ds.x.push_back(xv);
    ds.y.push_back(yv);
    ds.cov_levels.push_back(std::move(levels));
  }
  return ds;
}

/// Reference-level dummy encoding with intercept; column order follows the
/// schema's covariate and level declarations.  Two-level covariates keep their
/// bare name, wider ones are labeled name=level.
inline Eigen::MatrixXd encode_covariates(const Dataset& ds,
                                         const std::vector<std::string>& selection,
                                         std::vector<std::string>& names_out) {
  const int n = static_cast<int>(ds.x.size());
  struct DummyCol {
    size_t cov;
    int level;
    std::string name;
  };
  std::vector<DummyCol> cols;
  for (const auto& want : selection) {
    const auto it = std::find_if(ds.covariates.begin(), ds.covariates.end(),
                                 [&](const CovariateDef& d) { return d.name == want; });
    if (it == ds.covariates.end())
      throw std::invalid_argument("encode_covariates: unknown covariate '" + want + "'");
    const size_t c = static_cast<size_t>(it - ds.covariates.begin());
    const auto& def = *it;
    for (int l = 0; l < static_cast<int>(def.levels.size()); ++l) {
      if (def.levels[l] == def.reference) continue;
      const std::string label =
          def.levels.size() == 2 ? def.name : def.name + "=" + def.levels[l];
      cols.push_back({c, l, label});
    }
  }
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n, 1 + static_cast<int>(cols.size()));
  Z.col(0).setOnes();
  for (int i = 0; i < n; ++i)
    for (size_t k = 0; k < cols.size(); ++k)
      if (ds.cov_levels[i][cols[k].cov] == cols[k].level) Z(i, 1 + static_cast<int>(k)) = 1.0;
  names_out.clear();
  names_out.push_back("Intercept");
  for (const auto& c : cols) names_out.push_back(c.name);
  return Z;
}

}  // namespace countcop
