#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "countcop/dataset.hpp"
#include "countcop/estimation.hpp"
#include "countcop/simulation.hpp"

namespace countcop {

// ---------------------------------------------------------------------------
// Conditional reports (per-patient margins from the fitted regressions)
// ---------------------------------------------------------------------------

/// P(X = x | Y = y) = h(x,y) / g(y) over x = 0..support; sums to one over the
/// truncated support.  Rejects conditioning values the margin cannot produce.
inline std::vector<double> conditional_pmf(const CopulaSpec& copula,
                                           const DiscreteMargin& margin_x,
                                           const DiscreteMargin& margin_y, int y,
                                           double support_tail = 1e-10) {
  if (y < 0) throw std::invalid_argument("conditional_pmf: y must be nonnegative");
  const double gy = margin_y.pmf(y);
  if (gy < 1e-300)
    throw std::invalid_argument("conditional_pmf: margin pmf at y=" + std::to_string(y) +
                                " is numerically zero");
  const double Gy = margin_y.cdf(y);
  const double Gym = margin_y.cdf(y - 1);
  const int kx = margin_x.truncation_point(support_tail);
  std::vector<double> out(kx + 1);
  double Fxm = 0.0;
  for (int x = 0; x <= kx; ++x) {
    const double Fx = margin_x.cdf(x);
    double h = copula_cdf(copula, Fx, Gy) - copula_cdf(copula, Fxm, Gy) -
               copula_cdf(copula, Fx, Gym) + copula_cdf(copula, Fxm, Gym);
    if (h < 0.0) h = 0.0;
    out[x] = h / gy;
    Fxm = Fx;
  }
  return out;
}

struct ConditionalMatrix {
  int x_max = 0;  // last row absorbs P(X >= x_max | y)
  int y_max = 0;
  std::vector<std::vector<double>> mean;  // [x][y] across patients
  std::vector<std::vector<double>> sd;
};

struct DeltaRow {
  int j = 0;  // E(X|Y=j) - E(X|Y=j-1)
  double mean = 0.0, sd = 0.0, q1 = 0.0, q2 = 0.0, q3 = 0.0;
};

namespace detail {

inline double quantile_type7(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * (static_cast<double>(v.size()) - 1.0);
  const size_t lo = static_cast<size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// End-to-end analysis
// ---------------------------------------------------------------------------

struct MarginGof {
  std::vector<std::pair<int, long long>> observed;
  Nb2Fit fit;
  GofResult gof;
};

inline MarginGof margin_gof(const std::vector<int>& values) {
  std::map<int, long long> freq;
  for (int v : values) ++freq[v];
  MarginGof out;
  out.observed.assign(freq.begin(), freq.end());
  out.fit = fit_nb2_simple(out.observed);
  out.gof = chi_square_gof(out.observed, DiscreteMargin(Nb2{out.fit.mu, out.fit.psi}));
  return out;
}

/// Backward elimination over whole covariates: refit, drop the covariate whose
/// best (smallest) dummy p-value is the worst and above the threshold, repeat.
/// A covariate stays as soon as any of its levels is significant.
inline std::vector<std::string> backward_eliminate(const Dataset& ds,
                                                   const std::vector<int>& response,
                                                   std::vector<std::string> selection,
                                                   double alpha = 0.05) {
  while (!selection.empty()) {
    std::vector<std::string> names;
    const Eigen::MatrixXd Z = encode_covariates(ds, selection, names);
    const auto [model, report] = fit_nb2_regression(response, Z, names);
    std::string worst;
    double worst_p = alpha;
    for (const auto& cov : selection) {
      double best_p = 1.0;
      for (size_t j = 1; j < names.size(); ++j) {
        const bool belongs = names[j] == cov || names[j].rfind(cov + "=", 0) == 0;
        if (belongs) best_p = std::min(best_p, report.p_values[j]);
      }
      if (best_p > worst_p) {
        worst_p = best_p;
        worst = cov;
      }
    }
    if (worst.empty()) break;
    selection.erase(std::find(selection.begin(), selection.end(), worst));
  }
  return selection;
}

struct AnalyzeResult {
  MarginGof gof_x, gof_y;
  IfmResult ifm;
  ConditionalMatrix conditionals;
  std::vector<DeltaRow> deltas;
};

/// The full workflow: marginal NB2 fits + gof on the pooled frequency tables,
/// two-step IFM with the schema's covariate selections, then per-patient
/// conditional probabilities P(X=x|Y=y) and conditional-expectation deltas
/// aggregated across patients.
inline AnalyzeResult analyze_dataset(const Dataset& ds, const Schema& schema,
                                     CopulaFamily family) {
  if (ds.x.empty()) throw std::invalid_argument("analyze_dataset: no usable rows");
  AnalyzeResult res;
  res.gof_x = margin_gof(ds.x);
  res.gof_y = margin_gof(ds.y);

  std::vector<std::string> names_x, names_y;
  const Eigen::MatrixXd Zx = encode_covariates(ds, schema.select_x, names_x);
  const Eigen::MatrixXd Zy = encode_covariates(ds, schema.select_y, names_y);
  res.ifm = ifm_fit_vectors(ds.x, ds.y, Zx, Zy, names_x, names_y, family);

  const int n = static_cast<int>(ds.x.size());
  const int x_max = *std::max_element(ds.x.begin(), ds.x.end());
  const int y_max = *std::max_element(ds.y.begin(), ds.y.end());
  const CopulaSpec spec(family, res.ifm.copula.theta);

  res.conditionals.x_max = x_max;
  res.conditionals.y_max = y_max;
  res.conditionals.mean.assign(x_max + 1, std::vector<double>(y_max + 1, 0.0));
  res.conditionals.sd.assign(x_max + 1, std::vector<double>(y_max + 1, 0.0));

  // per-patient conditional pmfs; patients sharing covariates share the work
  struct PerPattern {
    std::vector<std::vector<double>> cond;  // [y][x-support]
    std::vector<double> expect;             // E(X|Y=y)
  };
  std::map<std::pair<double, double>, PerPattern> cache;
  std::vector<const PerPattern*> per_row(n);
  for (int i = 0; i < n; ++i) {
    const double mux = res.ifm.model_x.mean_for(Zx.row(i).transpose());
    const double muy = res.ifm.model_y.mean_for(Zy.row(i).transpose());
    auto it = cache.find({mux, muy});
    if (it == cache.end()) {
      PerPattern pat;
      const DiscreteMargin mxi{Nb2{mux, res.ifm.model_x.psi}};
      const DiscreteMargin myi{Nb2{muy, res.ifm.model_y.psi}};
      for (int yv = 0; yv <= y_max; ++yv) {
        auto pmf = conditional_pmf(spec, mxi, myi, yv);
        double ex = 0.0;
        for (size_t x = 0; x < pmf.size(); ++x) ex += static_cast<double>(x) * pmf[x];
        pat.expect.push_back(ex);
        pat.cond.push_back(std::move(pmf));
      }
      it = cache.emplace(std::make_pair(mux, muy), std::move(pat)).first;
    }
    per_row[i] = &it->second;
  }

  for (int xv = 0; xv <= x_max; ++xv)
    for (int yv = 0; yv <= y_max; ++yv) {
      std::vector<double> vals(n);
      for (int i = 0; i < n; ++i) {
        const auto& pmf = per_row[i]->cond[yv];
        if (xv < x_max) {
          vals[i] = xv < static_cast<int>(pmf.size()) ? pmf[xv] : 0.0;
        } else {
          // display row x_max absorbs the upper tail, matching the capped coding
          double tail = 0.0;
          for (size_t x = x_max; x < pmf.size(); ++x) tail += pmf[x];
          vals[i] = tail;
        }
      }
      const auto ms = detail::mean_sd(vals);
      res.conditionals.mean[xv][yv] = ms.mean;
      res.conditionals.sd[xv][yv] = ms.sd;
    }

  for (int j = 1; j <= y_max; ++j) {
    std::vector<double> diffs(n);
    for (int i = 0; i < n; ++i) diffs[i] = per_row[i]->expect[j] - per_row[i]->expect[j - 1];
    DeltaRow row;
    row.j = j;
    const auto ms = detail::mean_sd(diffs);
    row.mean = ms.mean;
    row.sd = ms.sd;
    row.q1 = detail::quantile_type7(diffs, 0.25);
    row.q2 = detail::quantile_type7(diffs, 0.50);
    row.q3 = detail::quantile_type7(diffs, 0.75);
    res.deltas.push_back(row);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace detail {

inline std::string num6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace detail

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
  if (!out.good()) throw std::runtime_error("write failed: " + path);
}

inline std::string study_result_csv(const StudyResult& r) {
  std::ostringstream os;
  os << "family,theta,n,pop_tau,pop_rho,theta_mean,theta_sd,tau_mean,tau_sd,"
        "rho_mean,rho_sd,ratio,excluded\n";
  for (const auto& c : r.cells) {
    os << family_name(r.family) << ',' << detail::num6(c.theta) << ',' << c.n << ','
       << detail::num6(c.pop_tau) << ',' << detail::num6(c.pop_rho) << ','
       << detail::num6(c.theta_mean) << ',' << detail::num6(c.theta_sd) << ','
       << detail::num6(c.tau_mean) << ',' << detail::num6(c.tau_sd) << ','
       << detail::num6(c.rho_mean) << ',' << detail::num6(c.rho_sd) << ','
       << (c.ratio ? detail::num6(*c.ratio) : std::string("NA")) << ',' << c.excluded << '\n';
  }
  return os.str();
}

inline nlohmann::json study_result_json(const StudyResult& r) {
  nlohmann::json j;
  j["family"] = family_name(r.family);
  j["margin_x"] = r.margin_x_text;
  j["margin_y"] = r.margin_y_text;
  j["replications"] = r.replications;
  j["seed"] = r.seed;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json cell{{"theta", c.theta},
                        {"n", c.n},
                        {"pop_tau", c.pop_tau},
                        {"pop_rho", c.pop_rho},
                        {"theta_mean", c.theta_mean},
                        {"theta_sd", c.theta_sd},
                        {"tau_mean", c.tau_mean},
                        {"tau_sd", c.tau_sd},
                        {"rho_mean", c.rho_mean},
                        {"rho_sd", c.rho_sd},
                        {"excluded", c.excluded}};
    if (c.ratio)
      cell["ratio"] = *c.ratio;
    else
      cell["ratio"] = nullptr;
    j["cells"].push_back(cell);
  }
  return j;
}

/// Figure-style curve data: one row per (param, theta) grid point.
inline std::string ratio_curve_csv(const std::vector<RatioPoint>& pts) {
  std::ostringstream os;
  os << "param,theta,ratio\n";
  for (const auto& p : pts)
    os << detail::num6(p.param) << ',' << detail::num6(p.theta) << ','
       << (p.ratio ? detail::num6(*p.ratio) : std::string("NA")) << '\n';
  return os.str();
}

inline nlohmann::json fit_report_json(const FitReport& r) {
  nlohmann::json j;
  j["minus2loglik"] = r.minus2loglik;
  j["aic"] = r.aic;
  j["converged"] = r.converged;
  j["coefficients"] = nlohmann::json::array();
  for (size_t i = 0; i < r.names.size(); ++i) {
    nlohmann::json row{{"name", r.names[i]}, {"estimate", r.estimates[i]}};
    if (!std::isnan(r.std_errors[i])) {
      row["std_error"] = r.std_errors[i];
      row["p_value"] = r.p_values[i];
    }
    j["coefficients"].push_back(row);
  }
  return j;
}

inline nlohmann::json analyze_result_json(const AnalyzeResult& res, CopulaFamily family) {
  nlohmann::json j;
  auto gof_json = [](const MarginGof& g) {
    nlohmann::json out;
    out["mu"] = g.fit.mu;
    out["psi"] = g.fit.psi;
    out["chi_square"] = g.gof.statistic;
    out["p_value"] = g.gof.p_value;
    out["df"] = g.gof.df;
    out["observed"] = nlohmann::json::array();
    out["fitted"] = nlohmann::json::array();
    for (size_t i = 0; i < g.observed.size(); ++i) {
      out["observed"].push_back({{"value", g.observed[i].first},
                                 {"count", g.observed[i].second}});
      out["fitted"].push_back(g.gof.fitted[i]);
    }
    return out;
  };
  j["gof_x"] = gof_json(res.gof_x);
  j["gof_y"] = gof_json(res.gof_y);
  j["margin_x"] = fit_report_json(res.ifm.report_x);
  j["margin_y"] = fit_report_json(res.ifm.report_y);
  j["copula"] = {{"family", family_name(family)},
                 {"theta", res.ifm.copula.theta},
                 {"minus2loglik", -2.0 * res.ifm.copula.loglik},
                 {"at_boundary", res.ifm.copula.at_boundary},
                 {"tau", res.ifm.tau_mean},
                 {"rho", res.ifm.rho_mean}};
  j["conditional_mean"] = res.conditionals.mean;
  j["conditional_sd"] = res.conditionals.sd;
  j["delta_expectations"] = nlohmann::json::array();
  for (const auto& d : res.deltas)
    j["delta_expectations"].push_back({{"j", d.j},
                                       {"mean", d.mean},
                                       {"sd", d.sd},
                                       {"q1", d.q1},
                                       {"q2", d.q2},
                                       {"q3", d.q3}});
  return j;
}

inline std::string conditional_matrix_csv(const ConditionalMatrix& m) {
  std::ostringstream os;
  os << "x";
  for (int y = 0; y <= m.y_max; ++y) os << ",y" << y << "_mean,y" << y << "_sd";
  os << '\n';
  for (int x = 0; x <= m.x_max; ++x) {
    os << x;
    for (int y = 0; y <= m.y_max; ++y)
      os << ',' << detail::num6(m.mean[x][y]) << ',' << detail::num6(m.sd[x][y]);
    os << '\n';
  }
  return os.str();
}

inline std::string deltas_csv(const std::vector<DeltaRow>& rows) {
  std::ostringstream os;
  os << "j,mean,sd,q1,q2,q3\n";
  for (const auto& d : rows)
    os << d.j << ',' << detail::num6(d.mean) << ',' << detail::num6(d.sd) << ','
       << detail::num6(d.q1) << ',' << detail::num6(d.q2) << ',' << detail::num6(d.q3) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Study configuration files (flat key = value lines, # comments)
// ---------------------------------------------------------------------------

/// Recognized keys: family, theta (comma list), margin_x, margin_y,
/// sample_sizes (comma list), replications, seed, refit_margins, threads.
inline StudyConfig parse_study_config(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("study config line " + std::to_string(line_no) +
                                  ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto require = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end())
      throw std::invalid_argument("study config is missing required key '" + key + "'");
    return it->second;
  };
  auto doubles = [](const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
  };

  StudyConfig cfg{CopulaFamily::frank,
                  {},
                  parse_margin(require("margin_x")),
                  parse_margin(require("margin_y")),
                  {},
                  200,
                  1,
                  false,
                  1};
  cfg.family = parse_family(require("family"));
  cfg.thetas = doubles(require("theta"));
  for (double v : doubles(require("sample_sizes")))
    cfg.sample_sizes.push_back(static_cast<int>(v));
  if (kv.count("replications")) cfg.replications = std::stoi(kv["replications"]);
  if (kv.count("seed")) cfg.seed = std::stoull(kv["seed"]);
  if (kv.count("refit_margins"))
    cfg.refit_margins = kv["refit_margins"] == "true" || kv["refit_margins"] == "1";
  if (kv.count("threads")) cfg.threads = std::stoi(kv["threads"]);
  return cfg;
}

}  // namespace countcop
