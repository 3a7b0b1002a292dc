#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "countcop/bivariate.hpp"
#include "countcop/estimation.hpp"
#include "countcop/rng.hpp"

namespace countcop {

/// n dependent count pairs: (quantile_X(U), quantile_Y(V)) for (U,V) ~ copula.
inline std::vector<std::pair<int, int>> sample_counts(const BivariateCountModel& model, int n,
                                                      Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_counts: n must be >= 1");
  // quantile tables truncated at 1e-12 tail mass: a uniform draw essentially
  // never lands beyond the cached cdf, and if it does the top bucket is used.
  const MarginTable fx = build_margin_table(model.margin_x, 1e-12);
  const MarginTable gy = build_margin_table(model.margin_y, 1e-12);
  std::vector<std::pair<int, int>> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const auto [u, v] = sample_pair(model.copula, rng);
    out.emplace_back(fx.quantile(u), gy.quantile(v));
  }
  return out;
}

struct StudyConfig {
  CopulaFamily family = CopulaFamily::frank;
  std::vector<double> thetas;
  DiscreteMargin margin_x;
  DiscreteMargin margin_y;
  std::vector<int> sample_sizes;
  int replications = 200;
  std::uint64_t seed = 1;
  bool refit_margins = false;  // sensitivity option: re-estimate NB2 margins per replication
  int threads = 1;
};

struct StudyCell {
  double theta = 0.0;
  int n = 0;
  double pop_tau = 0.0;
  double pop_rho = 0.0;
  double theta_mean = 0.0, theta_sd = 0.0;
  double tau_mean = 0.0, tau_sd = 0.0;
  double rho_mean = 0.0, rho_sd = 0.0;
  std::optional<double> ratio;  // mean rho-hat / mean tau-hat
  int excluded = 0;
};

struct StudyResult {
  CopulaFamily family = CopulaFamily::frank;
  std::string margin_x_text;
  std::string margin_y_text;
  int replications = 0;
  std::uint64_t seed = 0;
  std::vector<StudyCell> cells;
};

namespace detail {

struct MeanSd {
  double mean = 0.0, sd = 0.0;
};

inline MeanSd mean_sd(const std::vector<double>& xs) {
  MeanSd r;
  if (xs.empty()) return r;
  double s = 0.0;
  for (double x : xs) s += x;
  r.mean = s / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

}  // namespace detail

/// The replication study: for every (theta, n) cell draw samples, re-estimate
/// theta with margins held at their true specification, evaluate the plug-in
/// tau/rho at theta-hat, and aggregate means and standard deviations.
/// Deterministic for a fixed config: replication r of cell c uses the rng
/// seeded with derive_seed(seed, c * replications + r), and aggregation runs
/// in replication order regardless of thread count.
inline StudyResult run_study(const StudyConfig& cfg) {
  if (cfg.replications < 1) throw std::invalid_argument("run_study: replications must be >= 1");
  if (cfg.thetas.empty() || cfg.sample_sizes.empty())
    throw std::invalid_argument("run_study: empty theta or sample-size list");
  for (double th : cfg.thetas)
    if (!theta_in_domain(cfg.family, th))
      throw std::invalid_argument(std::string("run_study: theta=") + std::to_string(th) +
                                  " outside domain of " + family_name(cfg.family) + " (" +
                                  theta_domain_text(cfg.family) + ")");

  StudyResult result;
  result.family = cfg.family;
  result.margin_x_text = cfg.margin_x.text();
  result.margin_y_text = cfg.margin_y.text();
  result.replications = cfg.replications;
  result.seed = cfg.seed;

  std::uint64_t cell_index = 0;
  for (double theta : cfg.thetas) {
    const CopulaSpec true_spec(cfg.family, theta);
    const BivariateCountModel true_model{true_spec, cfg.margin_x, cfg.margin_y};
    const DependenceResult pop = dependence(true_model);
    for (int n : cfg.sample_sizes) {
      struct RepOutcome {
        double theta = 0.0, tau = 0.0, rho = 0.0;
        bool ok = false;
      };
      std::vector<RepOutcome> reps(cfg.replications);
      const std::uint64_t cell_base = cell_index * static_cast<std::uint64_t>(cfg.replications);

      auto run_rep = [&](int r) {
        Rng rng(derive_seed(cfg.seed, cell_base + static_cast<std::uint64_t>(r)));
        RepOutcome& out = reps[r];
        try {
          const auto pairs = sample_counts(true_model, n, rng);
          DiscreteMargin mx = cfg.margin_x;
          DiscreteMargin my = cfg.margin_y;
          if (cfg.refit_margins) {
            auto refit = [](const std::vector<std::pair<int, int>>& ps, bool first) {
              std::vector<int> zs;
              zs.reserve(ps.size());
              for (const auto& p : ps) zs.push_back(first ? p.first : p.second);
              const auto fit = fit_nb2_counts(zs);
              return DiscreteMargin(Nb2{fit.mu, fit.psi});
            };
            mx = refit(pairs, true);
            my = refit(pairs, false);
          }
          const auto fit = fit_copula_theta(pairs, mx, my, cfg.family);
          const CopulaSpec hat_spec(cfg.family, fit.theta);
          const DependenceResult dep = dependence(BivariateCountModel{hat_spec, mx, my});
          out.theta = fit.theta;
          out.tau = dep.tau;
          out.rho = dep.rho;
          out.ok = true;
        } catch (const std::exception&) {
          out.ok = false;  // recorded and excluded below
        }
      };

      const int workers = std::max(1, cfg.threads);
      if (workers == 1) {
        for (int r = 0; r < cfg.replications; ++r) run_rep(r);
      } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w)
          pool.emplace_back([&, w]() {
            for (int r = w; r < cfg.replications; r += workers) run_rep(r);
          });
        for (auto& t : pool) t.join();
      }

      std::vector<double> ths, taus, rhos;
      ths.reserve(cfg.replications);
      int excluded = 0;
      for (const auto& rep : reps) {
        if (!rep.ok) {
          ++excluded;
          continue;
        }
        ths.push_back(rep.theta);
        taus.push_back(rep.tau);
        rhos.push_back(rep.rho);
      }
      if (excluded * 20 > cfg.replications)
        throw std::runtime_error("run_study: more than 5% of replications failed in cell theta=" +
                                 std::to_string(theta) + ", n=" + std::to_string(n) + " (" +
                                 std::to_string(excluded) + "/" +
                                 std::to_string(cfg.replications) + ")");

      StudyCell cell;
      cell.theta = theta;
      cell.n = n;
      cell.pop_tau = pop.tau;
      cell.pop_rho = pop.rho;
      const auto mt = detail::mean_sd(ths);
      const auto tt = detail::mean_sd(taus);
      const auto rr = detail::mean_sd(rhos);
      cell.theta_mean = mt.mean;
      cell.theta_sd = mt.sd;
      cell.tau_mean = tt.mean;
      cell.tau_sd = tt.sd;
      cell.rho_mean = rr.mean;
      cell.rho_sd = rr.sd;
      if (std::fabs(tt.mean) >= 1e-6) cell.ratio = rr.mean / tt.mean;
      cell.excluded = excluded;
      result.cells.push_back(cell);
      ++cell_index;
    }
  }
  return result;
}

}  // namespace countcop
