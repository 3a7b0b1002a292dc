#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "countcop/copula.hpp"
#include "countcop/margins.hpp"

namespace countcop {

/// Copula + two count margins; owner of the joint pmf h(x,y).
struct BivariateCountModel {
  CopulaSpec copula;
  DiscreteMargin margin_x;
  DiscreteMargin margin_y;
};

struct DependenceResult {
  double tau = 0.0;
  double rho = 0.0;
  std::optional<double> ratio;  // rho/tau; empty when |tau| < 1e-9
  double p_concordance = 0.0;   // three-copy sense: (X1,Y1) vs independent X2, Y3
  double p_discordance = 0.0;
  double p_tie = 0.0;
};

namespace detail {

constexpr double kJointPmfSlack = -1e-12;
constexpr double kSeriesTail = 1e-12;

// Grid of copula values at the margin lattice:
//   C(i, j) = copula(F(i-1), G(j-1)),  i in [0, Kx+1], j in [0, Ky+1],
// with F(-1) = 0.  Every quantity in the dependence sums is a combination of
// these entries, so they are computed once.
struct JointGrid {
  MarginTable fx, gy;
  std::vector<double> cvals;  // (Kx+2) x (Ky+2), row-major
  int nx = 0, ny = 0;

  double C(int i, int j) const { return cvals[static_cast<size_t>(i) * ny + j]; }

  // h(x,y) per the inclusion-exclusion of the joint cdf; values within
  // kJointPmfSlack of zero are clamped, anything lower means a broken copula.
  double h(int x, int y) const {
    const double val = C(x + 1, y + 1) - C(x, y + 1) - C(x + 1, y) + C(x, y);
    if (val < kJointPmfSlack)
      throw std::runtime_error("joint pmf h(" + std::to_string(x) + "," + std::to_string(y) +
                               ") = " + std::to_string(val) +
                               " < -1e-12: copula is not 2-increasing");
    return val < 0.0 ? 0.0 : val;
  }
};

inline JointGrid build_joint_grid(const BivariateCountModel& model, double tail = kSeriesTail) {
  JointGrid g;
  g.fx = build_margin_table(model.margin_x, tail);
  g.gy = build_margin_table(model.margin_y, tail);
  g.nx = g.fx.K + 2;
  g.ny = g.gy.K + 2;
  g.cvals.resize(static_cast<size_t>(g.nx) * g.ny);
  for (int i = 0; i < g.nx; ++i) {
    const double u = g.fx.cdf_at(i - 1);
    for (int j = 0; j < g.ny; ++j) {
      const double v = g.gy.cdf_at(j - 1);
      g.cvals[static_cast<size_t>(i) * g.ny + j] = copula_cdf(model.copula, u, v);
    }
  }
  return g;
}

}  // namespace detail

/// h(x,y) = C(F(x),G(y)) - C(F(x-1),G(y)) - C(F(x),G(y-1)) + C(F(x-1),G(y-1)).
inline double joint_pmf(const BivariateCountModel& model, int x, int y) {
  if (x < 0 || y < 0) throw std::invalid_argument("joint_pmf: x and y must be nonnegative");
  const auto& mx = model.margin_x;
  const auto& my = model.margin_y;
  const double Fx = mx.cdf(x), Fxm = mx.cdf(x - 1);
  const double Gy = my.cdf(y), Gym = my.cdf(y - 1);
  const double val = copula_cdf(model.copula, Fx, Gy) - copula_cdf(model.copula, Fxm, Gy) -
                     copula_cdf(model.copula, Fx, Gym) + copula_cdf(model.copula, Fxm, Gym);
  if (val < detail::kJointPmfSlack)
    throw std::runtime_error("joint pmf h(" + std::to_string(x) + "," + std::to_string(y) +
                             ") = " + std::to_string(val) +
                             " < -1e-12: copula is not 2-increasing");
  return val < 0.0 ? 0.0 : val;
}

/// tau, rho, rho/tau and the three-copy concordance/discordance/tie
/// probabilities, all from one pass over the truncated grid:
///   tau = sum h(x,y) {4 C(F(x-1),G(y-1)) - h(x,y)} + sum f^2 + sum g^2 - 1
///   rho = 6 sum h [(1-F(x))(1-G(y)) + F(x-1)G(y-1) - f g / 2] + 3 sum (f^2 + g^2) - 3
inline DependenceResult dependence(const BivariateCountModel& model) {
  const auto g = detail::build_joint_grid(model);
  double tau_acc = 0.0, rho_acc = 0.0;
  double pc = 0.0, pd = 0.0, hfg = 0.0;
  for (int x = 0; x <= g.fx.K; ++x) {
    const double Fx = g.fx.cdf[x], Fxm = g.fx.cdf_at(x - 1), f = g.fx.pmf[x];
    for (int y = 0; y <= g.gy.K; ++y) {
      const double Gy = g.gy.cdf[y], Gym = g.gy.cdf_at(y - 1), q = g.gy.pmf[y];
      const double h = g.h(x, y);
      tau_acc += h * (4.0 * g.C(x, y) - h);
      rho_acc += h * ((1.0 - Fx) * (1.0 - Gy) + Fxm * Gym - 0.5 * f * q);
      pc += h * ((1.0 - Fx) * (1.0 - Gy) + Fxm * Gym);
      pd += h * (Fxm * (1.0 - Gy) + (1.0 - Fx) * Gym);
      hfg += h * f * q;
    }
  }
  double sf2 = 0.0, sg2 = 0.0;
  for (double f : g.fx.pmf) sf2 += f * f;
  for (double q : g.gy.pmf) sg2 += q * q;

  DependenceResult r;
  r.tau = tau_acc + sf2 + sg2 - 1.0;
  r.rho = 6.0 * rho_acc + 3.0 * (sf2 + sg2) - 3.0;
  r.p_concordance = pc;
  r.p_discordance = pd;
  r.p_tie = sf2 + sg2 - hfg;
  if (std::fabs(r.tau) >= 1e-9) r.ratio = r.rho / r.tau;
  return r;
}

/// Population Kendall's tau, both sums truncated at truncation_point(1e-12).
inline double kendall_tau(const BivariateCountModel& model) { return dependence(model).tau; }

/// Population Spearman's rho, truncated the same way.
inline double spearman_rho(const BivariateCountModel& model) { return dependence(model).rho; }

/// Closed form for Bernoulli margins:
///   rho = -3 + 3 C(1-pX, 1-pY) + 3 pX + 3 pY - 3 pX pY.
inline double spearman_rho_bernoulli(const CopulaSpec& copula, double p_x, double p_y) {
  if (!(p_x > 0.0 && p_x < 1.0 && p_y > 0.0 && p_y < 1.0))
    throw std::invalid_argument("spearman_rho_bernoulli: probabilities must lie in (0,1)");
  const double c = copula_cdf(copula, 1.0 - p_x, 1.0 - p_y);
  return -3.0 + 3.0 * c + 3.0 * p_x + 3.0 * p_y - 3.0 * p_x * p_y;
}

/// tau = 2 [C(1-pX, 1-pY) - (1-pX)(1-pY)].
inline double kendall_tau_bernoulli(const CopulaSpec& copula, double p_x, double p_y) {
  if (!(p_x > 0.0 && p_x < 1.0 && p_y > 0.0 && p_y < 1.0))
    throw std::invalid_argument("kendall_tau_bernoulli: probabilities must lie in (0,1)");
  const double c = copula_cdf(copula, 1.0 - p_x, 1.0 - p_y);
  return 2.0 * (c - (1.0 - p_x) * (1.0 - p_y));
}

struct RatioPoint {
  double param = 0.0;
  double theta = 0.0;
  double tau = 0.0;
  double rho = 0.0;
  std::optional<double> ratio;  // empty at independence points
};

/// rho/tau over a (margin parameter) x (theta) grid; both margins use the same
/// distribution produced by `margin_of`.
inline std::vector<RatioPoint> ratio_curve(CopulaFamily family,
                                           const std::vector<double>& thetas,
                                           const std::function<DiscreteMargin(double)>& margin_of,
                                           const std::vector<double>& params) {
  std::vector<RatioPoint> out;
  out.reserve(thetas.size() * params.size());
  for (double th : thetas) {
    const CopulaSpec spec = family_has_theta(family) ? CopulaSpec(family, th) : CopulaSpec(family);
    for (double p : params) {
      const DiscreteMargin m = margin_of(p);
      const auto dep = dependence(BivariateCountModel{spec, m, m});
      RatioPoint pt;
      pt.param = p;
      pt.theta = th;
      pt.tau = dep.tau;
      pt.rho = dep.rho;
      pt.ratio = dep.ratio;
      out.push_back(pt);
    }
  }
  return out;
}

}  // namespace countcop
