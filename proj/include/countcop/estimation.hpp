#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include "countcop/bivariate.hpp"
#include "countcop/copula.hpp"
#include "countcop/detail/optimize.hpp"
#include "countcop/margins.hpp"

namespace countcop {

inline double normal_sf(double z) { return 0.5 * std::erfc(z / 1.4142135623730951); }

/// Chi-square survival function P(X > x) with df degrees of freedom.
inline double chi_square_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(df / 2.0, x / 2.0);
}

// ---------------------------------------------------------------------------
// Copula parameter likelihood
// ---------------------------------------------------------------------------

// One observation reduced to the margin cdf values the joint pmf needs.
struct ObsQuad {
  double Fx, Fxm, Gy, Gym;
  double weight = 1.0;
};

struct CopulaFitResult {
  double theta = 0.0;
  double loglik = 0.0;
  bool at_boundary = false;
  bool converged = false;
};

inline std::pair<double, double> theta_search_bounds(CopulaFamily family) {
  switch (family) {
    case CopulaFamily::frank: return {-50.0, 50.0};
    case CopulaFamily::clayton: return {1e-8, 60.0};
    case CopulaFamily::gumbel: return {1.0, 60.0};
    case CopulaFamily::joe: return {1.0, 60.0};
    case CopulaFamily::amh: return {-1.0 + 1e-8, 1.0 - 1e-8};
    default:
      throw std::invalid_argument(std::string(family_name(family)) +
                                  " copula has no free parameter to fit");
  }
}

/// sum w log h(x,y; theta) over the reduced observations.  Cells whose pmf
/// underflows are floored at 1e-300 so the objective stays finite.
inline double copula_loglik(CopulaFamily family, double theta, const std::vector<ObsQuad>& quads) {
  const CopulaSpec spec(family, theta);
  double ll = 0.0;
  for (const auto& q : quads) {
    double h = copula_cdf(spec, q.Fx, q.Gy) - copula_cdf(spec, q.Fxm, q.Gy) -
               copula_cdf(spec, q.Fx, q.Gym) + copula_cdf(spec, q.Fxm, q.Gym);
    if (!(h > 1e-300)) h = 1e-300;
    ll += q.weight * std::log(h);
  }
  return ll;
}

inline CopulaFitResult fit_copula_theta_quads(CopulaFamily family,
                                              const std::vector<ObsQuad>& quads) {
  const auto [lo, hi] = theta_search_bounds(family);
  const auto res = detail::brent_minimize(
      [&](double th) { return -copula_loglik(family, th, quads); }, lo, hi, 1e-8);
  CopulaFitResult out;
  out.theta = res.x;
  out.loglik = -res.fx;
  out.converged = res.converged;
  const double edge = 1e-6 * std::max(1.0, hi - lo);
  out.at_boundary = (res.x - lo <= edge) || (hi - res.x <= edge);
  return out;
}

/// Maximize sum log h(x_i, y_i; theta) with the margins held fixed.
inline CopulaFitResult fit_copula_theta(const std::vector<std::pair<int, int>>& pairs,
                                        const DiscreteMargin& margin_x,
                                        const DiscreteMargin& margin_y, CopulaFamily family) {
  if (pairs.size() < 30)
    throw std::invalid_argument("fit_copula_theta: need at least 30 observations, got " +
                                std::to_string(pairs.size()));
  // Aggregate duplicate (x,y) cells; the ordered map also makes the result
  // independent of row order.
  std::map<std::pair<int, int>, double> counts;
  for (const auto& p : pairs) counts[p] += 1.0;
  std::vector<ObsQuad> quads;
  quads.reserve(counts.size());
  for (const auto& [xy, w] : counts) {
    ObsQuad q;
    q.Fx = margin_x.cdf(xy.first);
    q.Fxm = margin_x.cdf(xy.first - 1);
    q.Gy = margin_y.cdf(xy.second);
    q.Gym = margin_y.cdf(xy.second - 1);
    q.weight = w;
    quads.push_back(q);
  }
  return fit_copula_theta_quads(family, quads);
}

// ---------------------------------------------------------------------------
// NB2 maximum likelihood, no covariates
// ---------------------------------------------------------------------------

struct Nb2Fit {
  double mu = 0.0;
  double psi = 0.0;
  double loglik = 0.0;
};

/// mu-hat = sample mean (closed form); psi-hat maximizes the NB2 likelihood in
/// psi with mu fixed, by Brent search on log(psi).
inline Nb2Fit fit_nb2_simple(const std::vector<std::pair<int, long long>>& freq) {
  long long n = 0;
  long long sum = 0;
  for (const auto& [value, count] : freq) {
    if (value < 0 || count < 0)
      throw std::invalid_argument("fit_nb2_simple: negative value or count");
    n += count;
    sum += static_cast<long long>(value) * count;
  }
  if (n == 0) throw std::invalid_argument("fit_nb2_simple: empty frequency table");
  if (sum == 0)
    throw std::invalid_argument("fit_nb2_simple: all observations are zero; psi unidentifiable");
  const double mu = static_cast<double>(sum) / static_cast<double>(n);

  auto neg_ll = [&](double log_psi) {
    const DiscreteMargin m{Nb2{mu, std::exp(log_psi)}};
    double ll = 0.0;
    for (const auto& [value, count] : freq)
      if (count > 0) ll += static_cast<double>(count) * m.log_pmf(value);
    return -ll;
  };
  const auto res = detail::brent_minimize(neg_ll, std::log(1e-6), std::log(1e6), 1e-8);
  Nb2Fit fit;
  fit.mu = mu;
  fit.psi = std::exp(res.x);
  fit.loglik = -res.fx;
  return fit;
}

inline Nb2Fit fit_nb2_counts(const std::vector<int>& xs) {
  std::map<int, long long> freq;
  for (int x : xs) {
    if (x < 0) throw std::invalid_argument("fit_nb2_counts: negative count");
    ++freq[x];
  }
  std::vector<std::pair<int, long long>> table(freq.begin(), freq.end());
  return fit_nb2_simple(table);
}

// ---------------------------------------------------------------------------
// Chi-square goodness of fit
// ---------------------------------------------------------------------------

enum class DfRule {
  cells_minus_1,         // the convention the reference analysis uses
  cells_minus_1_minus_k  // textbook: subtract the number of fitted parameters
};

struct GofResult {
  double statistic = 0.0;
  double p_value = 0.0;
  int df = 0;
  std::vector<double> fitted;  // expected counts, last cell absorbs the tail
};

/// Pearson X^2 = sum (O-E)^2 / E with E = n * pmf, the last cell absorbing the
/// upper tail mass.
inline GofResult chi_square_gof(const std::vector<std::pair<int, long long>>& observed,
                                const DiscreteMargin& margin,
                                DfRule rule = DfRule::cells_minus_1, int fitted_params = 0) {
  if (observed.size() < 2) throw std::invalid_argument("chi_square_gof: need at least 2 cells");
  for (size_t i = 1; i < observed.size(); ++i)
    if (observed[i].first <= observed[i - 1].first)
      throw std::invalid_argument("chi_square_gof: cell values must be strictly increasing");
  long long n = 0;
  for (const auto& [value, count] : observed) {
    if (value < 0 || count < 0)
      throw std::invalid_argument("chi_square_gof: negative value or count");
    n += count;
  }
  if (n == 0) throw std::invalid_argument("chi_square_gof: empty table");

  GofResult res;
  res.fitted.reserve(observed.size());
  for (size_t i = 0; i < observed.size(); ++i) {
    const int value = observed[i].first;
    const double prob = (i + 1 == observed.size()) ? 1.0 - margin.cdf(value - 1)
                                                   : margin.pmf(value);
    const double expected = static_cast<double>(n) * prob;
    if (!(expected > 0.0))
      throw std::invalid_argument("chi_square_gof: expected count is zero in cell value=" +
                                  std::to_string(value));
    res.fitted.push_back(expected);
  }
  double x2 = 0.0;
  for (size_t i = 0; i < observed.size(); ++i) {
    const double o = static_cast<double>(observed[i].second);
    const double d = o - res.fitted[i];
    x2 += d * d / res.fitted[i];
  }
  int df = static_cast<int>(observed.size()) - 1;
  if (rule == DfRule::cells_minus_1_minus_k) df -= fitted_params;
  if (df < 1) throw std::invalid_argument("chi_square_gof: nonpositive degrees of freedom");
  res.statistic = x2;
  res.df = df;
  res.p_value = chi_square_sf(x2, static_cast<double>(df));
  return res;
}

// ---------------------------------------------------------------------------
// NB2 regression (log link)
// ---------------------------------------------------------------------------

struct RegressionModel {
  Eigen::VectorXd beta;
  double psi = 0.0;
  std::vector<std::string> column_names;  // one per design column, intercept first

  double mean_for(const Eigen::VectorXd& row) const { return std::exp(row.dot(beta)); }
};

struct FitReport {
  std::vector<std::string> names;    // beta columns, then "Dispersion"
  std::vector<double> estimates;
  std::vector<double> std_errors;    // NaN where not reported (dispersion)
  std::vector<double> p_values;      // Wald, standard normal reference
  double minus2loglik = 0.0;
  double aic = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> loglik_trace;  // one entry per accepted ascent step
};

inline double nb2_regression_loglik(const std::vector<int>& y, const Eigen::MatrixXd& Z,
                                    const Eigen::VectorXd& beta, double psi) {
  const Eigen::VectorXd eta = Z * beta;
  double ll = 0.0;
  for (int i = 0; i < Z.rows(); ++i) {
    const double mu = std::exp(eta[i]);
    const double t = mu + psi;
    ll += std::lgamma(psi + y[i]) - std::lgamma(psi) - std::lgamma(y[i] + 1.0) +
          psi * std::log(psi / t) + y[i] * std::log(mu / t);
  }
  return ll;
}

/// Analytic score wrt beta: Z^T w with w_i = psi (y_i - mu_i) / (mu_i + psi).
inline Eigen::VectorXd nb2_regression_score(const std::vector<int>& y, const Eigen::MatrixXd& Z,
                                            const Eigen::VectorXd& beta, double psi) {
  const Eigen::VectorXd eta = Z * beta;
  Eigen::VectorXd w(Z.rows());
  for (int i = 0; i < Z.rows(); ++i) {
    const double mu = std::exp(eta[i]);
    w[i] = psi * (y[i] - mu) / (mu + psi);
  }
  return Z.transpose() * w;
}

/// Newton ascent on beta with psi profiled by an inner Brent search.
/// Convergence: score infinity-norm < 1e-6.  Standard errors come from the
/// inverse observed information at the optimum.
inline std::pair<RegressionModel, FitReport> fit_nb2_regression(
    const std::vector<int>& y, const Eigen::MatrixXd& Z,
    const std::vector<std::string>& names) {
  const int n = static_cast<int>(Z.rows());
  const int p = static_cast<int>(Z.cols());
  if (static_cast<int>(y.size()) != n)
    throw std::invalid_argument("fit_nb2_regression: response/design size mismatch");
  if (static_cast<int>(names.size()) != p)
    throw std::invalid_argument("fit_nb2_regression: need one name per design column");
  if (n <= p) throw std::invalid_argument("fit_nb2_regression: need more rows than columns");
  for (int v : y)
    if (v < 0) throw std::invalid_argument("fit_nb2_regression: negative response");

  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
      const auto perm = qr.colsPermutation().indices();
      std::string dependent;
      for (int i = qr.rank(); i < p; ++i) {
        if (!dependent.empty()) dependent += ", ";
        dependent += names[perm[i]];
      }
      throw std::invalid_argument("fit_nb2_regression: rank-deficient design; dependent columns: " +
                                  dependent);
    }
  }

  // start from least squares on log(y + 0.5)
  Eigen::VectorXd logy(n);
  for (int i = 0; i < n; ++i) logy[i] = std::log(y[i] + 0.5);
  Eigen::VectorXd beta = (Z.transpose() * Z).ldlt().solve(Z.transpose() * logy);
  double psi = 1.0;

  FitReport report;
  double ll = nb2_regression_loglik(y, Z, beta, psi);
  report.loglik_trace.push_back(ll);

  bool converged = false;
  int iter = 0;
  for (; iter < 200; ++iter) {
    // profile psi at the current beta
    const auto psi_res = detail::brent_minimize(
        [&](double lp) { return -nb2_regression_loglik(y, Z, beta, std::exp(lp)); },
        std::log(1e-6), std::log(1e6), 1e-9);
    psi = std::exp(psi_res.x);
    ll = -psi_res.fx;
    if (ll + 1e-9 < report.loglik_trace.back())
      throw std::logic_error("fit_nb2_regression: psi step decreased the log-likelihood");
    report.loglik_trace.push_back(ll);

    const Eigen::VectorXd grad = nb2_regression_score(y, Z, beta, psi);
    if (grad.lpNorm<Eigen::Infinity>() < 1e-6) {
      converged = true;
      break;
    }

    // observed information: Z^T D Z, D_ii = psi mu_i (psi + y_i) / (mu_i + psi)^2
    const Eigen::VectorXd eta = Z * beta;
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) {
      const double mu = std::exp(eta[i]);
      const double t = mu + psi;
      d[i] = psi * mu * (psi + y[i]) / (t * t);
    }
    const Eigen::MatrixXd info = Z.transpose() * d.asDiagonal() * Z;
    const Eigen::VectorXd step = info.ldlt().solve(grad);

    double t = 1.0;
    Eigen::VectorXd beta_new = beta + step;
    double ll_new = nb2_regression_loglik(y, Z, beta_new, psi);
    int halvings = 0;
    while (ll_new < ll - 1e-12 && halvings < 60) {
      t *= 0.5;
      beta_new = beta + t * step;
      ll_new = nb2_regression_loglik(y, Z, beta_new, psi);
      ++halvings;
    }
    if (ll_new < ll - 1e-12)
      throw std::logic_error("fit_nb2_regression: Newton step could not maintain ascent");
    beta = beta_new;
    ll = ll_new;
    report.loglik_trace.push_back(ll);

    if (beta.lpNorm<Eigen::Infinity>() > 30.0)
      throw std::runtime_error(
          "fit_nb2_regression: coefficients diverged (|beta| > 30); separation suspected");
  }

  RegressionModel model;
  model.beta = beta;
  model.psi = psi;
  model.column_names = names;

  // standard errors from the observed-information diagonal at the optimum
  const Eigen::VectorXd eta = Z * beta;
  Eigen::VectorXd d(n);
  for (int i = 0; i < n; ++i) {
    const double mu = std::exp(eta[i]);
    const double t = mu + psi;
    d[i] = psi * mu * (psi + y[i]) / (t * t);
  }
  const Eigen::MatrixXd info = Z.transpose() * d.asDiagonal() * Z;
  const Eigen::MatrixXd cov = info.inverse();

  report.names = names;
  report.names.push_back("Dispersion");
  for (int j = 0; j < p; ++j) {
    report.estimates.push_back(beta[j]);
    const double se = std::sqrt(std::max(cov(j, j), 0.0));
    report.std_errors.push_back(se);
    report.p_values.push_back(se > 0.0 ? 2.0 * normal_sf(std::fabs(beta[j]) / se) : 0.0);
  }
  report.estimates.push_back(psi);
  report.std_errors.push_back(std::numeric_limits<double>::quiet_NaN());
  report.p_values.push_back(std::numeric_limits<double>::quiet_NaN());
  report.minus2loglik = -2.0 * ll;
  report.aic = -2.0 * ll + 2.0 * (p + 1);
  report.converged = converged;
  report.iterations = iter;
  return {model, report};
}

// ---------------------------------------------------------------------------
// Two-step IFM on raw vectors (the pipeline wraps this with dataset handling)
// ---------------------------------------------------------------------------

struct IfmResult {
  RegressionModel model_x, model_y;
  FitReport report_x, report_y;
  CopulaFitResult copula;
  double tau_mean = 0.0;  // across-row plug-in values at theta-hat
  double rho_mean = 0.0;
};

/// Step 1 fits each margin's NB2 regression; step 2 maximizes the copula
/// likelihood in theta with the fitted margins substituted per row.  tau/rho
/// are plug-in population values per row, averaged across rows.
inline IfmResult ifm_fit_vectors(const std::vector<int>& xs, const std::vector<int>& ys,
                                 const Eigen::MatrixXd& Zx, const Eigen::MatrixXd& Zy,
                                 const std::vector<std::string>& names_x,
                                 const std::vector<std::string>& names_y, CopulaFamily family) {
  if (xs.size() != ys.size()) throw std::invalid_argument("ifm_fit: response length mismatch");
  const int n = static_cast<int>(xs.size());

  IfmResult out;
  std::tie(out.model_x, out.report_x) = fit_nb2_regression(xs, Zx, names_x);
  std::tie(out.model_y, out.report_y) = fit_nb2_regression(ys, Zy, names_y);

  // Reduce rows to margin-cdf quads, merging identical ones (categorical
  // designs produce few distinct covariate patterns).
  std::map<std::tuple<double, double, double, double>, double> agg;
  std::vector<double> mu_x(n), mu_y(n);
  for (int i = 0; i < n; ++i) {
    mu_x[i] = out.model_x.mean_for(Zx.row(i).transpose());
    mu_y[i] = out.model_y.mean_for(Zy.row(i).transpose());
    const DiscreteMargin mxi{Nb2{mu_x[i], out.model_x.psi}};
    const DiscreteMargin myi{Nb2{mu_y[i], out.model_y.psi}};
    agg[{mxi.cdf(xs[i]), mxi.cdf(xs[i] - 1), myi.cdf(ys[i]), myi.cdf(ys[i] - 1)}] += 1.0;
  }
  std::vector<ObsQuad> quads;
  quads.reserve(agg.size());
  for (const auto& [key, w] : agg)
    quads.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key), w});
  out.copula = fit_copula_theta_quads(family, quads);

  // Across-row plug-in dependence at theta-hat; identical mu pairs are computed once.
  const CopulaSpec spec(family, out.copula.theta);
  std::map<std::pair<double, double>, std::pair<double, double>> dep_cache;
  double tau_sum = 0.0, rho_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto key = std::make_pair(mu_x[i], mu_y[i]);
    auto it = dep_cache.find(key);
    if (it == dep_cache.end()) {
      const BivariateCountModel m{spec, DiscreteMargin(Nb2{mu_x[i], out.model_x.psi}),
                                  DiscreteMargin(Nb2{mu_y[i], out.model_y.psi})};
      const auto dep = dependence(m);
      it = dep_cache.emplace(key, std::make_pair(dep.tau, dep.rho)).first;
    }
    tau_sum += it->second.first;
    rho_sum += it->second.second;
  }
  out.tau_mean = tau_sum / n;
  out.rho_mean = rho_sum / n;
  return out;
}

}  // namespace countcop
