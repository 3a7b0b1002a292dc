#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "countcop/bivariate.hpp"
#include "countcop/rng.hpp"
#include "countcop/simulation.hpp"

namespace countcop {

struct ConcordanceProbabilities {
  double p_concordance = 0.0;
  double p_discordance = 0.0;
  double p_tie = 0.0;
};

namespace detail {

constexpr int kOracleSupportCap = 200;
constexpr double kOracleTail = 1e-8;

inline JointGrid oracle_grid(const BivariateCountModel& model) {
  auto g = build_joint_grid(model, kOracleTail);
  if (g.fx.K + 1 > kOracleSupportCap || g.gy.K + 1 > kOracleSupportCap)
    throw std::invalid_argument("concordance oracle: truncated supports are " +
                                std::to_string(g.fx.K + 1) + " x " + std::to_string(g.gy.K + 1) +
                                ", cap is " + std::to_string(kOracleSupportCap) + " per margin");
  return g;
}

}  // namespace detail

/// Definitional three-copy probabilities by exhaustive summation: the pair
/// (X1,Y1) against independent X2 and Y3.  3 (P(C) - P(D)) is the Spearman
/// cross-check value.  Deliberately brute force; supports capped at 200.
inline ConcordanceProbabilities concordance_probabilities(const BivariateCountModel& model) {
  const auto g = detail::oracle_grid(model);
  ConcordanceProbabilities r;
  for (int x1 = 0; x1 <= g.fx.K; ++x1)
    for (int y1 = 0; y1 <= g.gy.K; ++y1) {
      const double h = g.h(x1, y1);
      if (h == 0.0) continue;
      for (int x2 = 0; x2 <= g.fx.K; ++x2) {
        const double f2 = g.fx.pmf[x2];
        for (int y3 = 0; y3 <= g.gy.K; ++y3) {
          const double w = h * f2 * g.gy.pmf[y3];
          const int sx = (x1 > x2) - (x1 < x2);
          const int sy = (y1 > y3) - (y1 < y3);
          if (sx == 0 || sy == 0)
            r.p_tie += w;
          else if (sx == sy)
            r.p_concordance += w;
          else
            r.p_discordance += w;
        }
      }
    }
  return r;
}

/// Definitional two-copy probabilities: both pairs drawn from the joint pmf.
/// P(C) - P(D) is the Kendall cross-check value.
inline ConcordanceProbabilities kendall_concordance_probabilities(
    const BivariateCountModel& model) {
  const auto g = detail::oracle_grid(model);
  ConcordanceProbabilities r;
  for (int x1 = 0; x1 <= g.fx.K; ++x1)
    for (int y1 = 0; y1 <= g.gy.K; ++y1) {
      const double h1 = g.h(x1, y1);
      if (h1 == 0.0) continue;
      for (int x2 = 0; x2 <= g.fx.K; ++x2)
        for (int y2 = 0; y2 <= g.gy.K; ++y2) {
          const double w = h1 * g.h(x2, y2);
          const int sx = (x1 > x2) - (x1 < x2);
          const int sy = (y1 > y2) - (y1 < y2);
          if (sx == 0 || sy == 0)
            r.p_tie += w;
          else if (sx == sy)
            r.p_concordance += w;
          else
            r.p_discordance += w;
        }
    }
  return r;
}

/// Classical sample Spearman rank correlation (Pearson on ranks, midranks for
/// ties -- the jittered sample has none almost surely).
inline double sample_spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  const size_t n = xs.size();
  if (ys.size() != n || n < 2) throw std::invalid_argument("sample_spearman: bad input sizes");
  auto ranks = [](const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double mid = 0.5 * (i + j) + 1.0;
      for (size_t k = i; k <= j; ++k) r[idx[k]] = mid;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(xs);
  const auto ry = ranks(ys);
  const double mean = (n + 1) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double a = rx[i] - mean;
    const double b = ry[i] - mean;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  const double denom = std::sqrt(sxx * syy);
  if (denom == 0.0) return 0.0;
  return sxy / denom;
}

/// Continuation-based estimate of the population Spearman rho: draw n pairs,
/// add independent uniform(0,1) jitter to each coordinate, take the sample
/// Spearman of the continued data.
inline double jittered_rho_estimate(const BivariateCountModel& model, int n, Rng& rng) {
  if (n < 1000) throw std::invalid_argument("jittered_rho_estimate: n must be >= 1000");
  const auto pairs = sample_counts(model, n, rng);
  std::vector<double> xs(n), ys(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = pairs[i].first + rng.uniform01();
    ys[i] = pairs[i].second + rng.uniform01();
  }
  return sample_spearman(xs, ys);
}

}  // namespace countcop
