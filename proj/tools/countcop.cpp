// countcop -- copula dependence measures for count data.
//
// Subcommands:
//   measure   population tau/rho for a copula with count margins
//   simulate  seeded replication study from a config file
//   fit       two-step IFM fit of margins and copula on a CSV dataset
//   analyze   full workflow: fits, gof, conditional probability reports
//
// Exit codes: 0 success, 1 computation failure, 2 usage/validation error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "countcop/concordance.hpp"
#include "countcop/pipeline.hpp"

namespace fs = std::filesystem;
using namespace countcop;

namespace {

std::string g(double v) { return detail::num6(v); }

CopulaSpec make_spec(const std::string& family_name_arg, std::optional<double> theta) {
  const CopulaFamily family = parse_family(family_name_arg);
  if (family_has_theta(family)) {
    if (!theta)
      throw std::invalid_argument(std::string(family_name(family)) +
                                  " copula requires --theta (" + theta_domain_text(family) + ")");
    return CopulaSpec(family, *theta);
  }
  if (theta)
    throw std::invalid_argument(std::string(family_name(family)) + " copula takes no --theta");
  return CopulaSpec(family);
}

int run_measure(const std::string& family_arg, std::optional<double> theta,
                const std::string& mx_arg, const std::string& my_arg, bool oracle,
                std::uint64_t seed) {
  const CopulaSpec spec = make_spec(family_arg, theta);
  const BivariateCountModel model{spec, parse_margin(mx_arg), parse_margin(my_arg)};
  const DependenceResult dep = dependence(model);

  const BivariateCountModel floor{CopulaSpec(CopulaFamily::frechet_lower), model.margin_x,
                                  model.margin_y};
  const BivariateCountModel ceil{CopulaSpec(CopulaFamily::frechet_upper), model.margin_x,
                                 model.margin_y};
  const DependenceResult lo = dependence(floor);
  const DependenceResult hi = dependence(ceil);

  std::printf("family          %s\n", spec.text().c_str());
  std::printf("margin_x        %s\n", model.margin_x.text().c_str());
  std::printf("margin_y        %s\n", model.margin_y.text().c_str());
  std::printf("tau             %s\n", g(dep.tau).c_str());
  std::printf("rho             %s\n", g(dep.rho).c_str());
  std::printf("ratio           %s\n", dep.ratio ? g(*dep.ratio).c_str() : "undefined");
  std::printf("p_concordance   %s\n", g(dep.p_concordance).c_str());
  std::printf("p_discordance   %s\n", g(dep.p_discordance).c_str());
  std::printf("p_tie           %s\n", g(dep.p_tie).c_str());
  std::printf("tau_bounds      [%s, %s]\n", g(lo.tau).c_str(), g(hi.tau).c_str());
  std::printf("rho_bounds      [%s, %s]\n", g(lo.rho).c_str(), g(hi.rho).c_str());

  if (oracle) {
    const auto probs = concordance_probabilities(model);
    const double rho_bf = 3.0 * (probs.p_concordance - probs.p_discordance);
    const auto two = kendall_concordance_probabilities(model);
    const double tau_bf = two.p_concordance - two.p_discordance;
    Rng rng(seed);
    const double rho_jit = jittered_rho_estimate(model, 20000, rng);
    std::printf("oracle_rho_bruteforce   %s (deviation %s)\n", g(rho_bf).c_str(),
                g(rho_bf - dep.rho).c_str());
    std::printf("oracle_tau_bruteforce   %s (deviation %s)\n", g(tau_bf).c_str(),
                g(tau_bf - dep.tau).c_str());
    std::printf("oracle_rho_jittered     %s (deviation %s, n=20000)\n", g(rho_jit).c_str(),
                g(rho_jit - dep.rho).c_str());
  }
  return 0;
}

int run_simulate(const std::string& config_path, const std::string& out_dir,
                 std::optional<int> threads) {
  std::ifstream in(config_path);
  if (!in) throw std::invalid_argument("cannot open config file: " + config_path);
  StudyConfig cfg = parse_study_config(in);
  if (threads)
    cfg.threads = *threads;
  else if (cfg.threads <= 1)
    cfg.threads = std::max(1u, std::thread::hardware_concurrency());

  const StudyResult result = run_study(cfg);

  std::printf("%-8s %8s %6s %8s %8s %18s %18s %18s %8s\n", "family", "theta", "n", "pop_tau",
              "pop_rho", "theta_hat (sd)", "tau_hat (sd)", "rho_hat (sd)", "ratio");
  for (const auto& c : result.cells) {
    char th[64], ta[64], rh[64];
    std::snprintf(th, sizeof(th), "%.3f (%.3f)", c.theta_mean, c.theta_sd);
    std::snprintf(ta, sizeof(ta), "%.3f (%.3f)", c.tau_mean, c.tau_sd);
    std::snprintf(rh, sizeof(rh), "%.3f (%.3f)", c.rho_mean, c.rho_sd);
    std::printf("%-8s %8s %6d %8.3f %8.3f %18s %18s %18s %8s\n", family_name(result.family),
                g(c.theta).c_str(), c.n, c.pop_tau, c.pop_rho, th, ta, rh,
                c.ratio ? g(*c.ratio).c_str() : "NA");
  }

  fs::create_directories(out_dir);
  write_text_file((fs::path(out_dir) / "study.csv").string(), study_result_csv(result));
  write_text_file((fs::path(out_dir) / "study.json").string(),
                  study_result_json(result).dump(2) + "\n");
  std::printf("wrote %s/study.csv and study.json\n", out_dir.c_str());
  return 0;
}

void print_fit_report(const char* label, const FitReport& r) {
  std::printf("%s\n", label);
  std::printf("  %-12s %12s %12s %10s\n", "term", "estimate", "std_error", "p_value");
  for (size_t i = 0; i < r.names.size(); ++i) {
    if (std::isnan(r.std_errors[i]))
      std::printf("  %-12s %12s\n", r.names[i].c_str(), g(r.estimates[i]).c_str());
    else
      std::printf("  %-12s %12s %12s %10s\n", r.names[i].c_str(), g(r.estimates[i]).c_str(),
                  g(r.std_errors[i]).c_str(), g(r.p_values[i]).c_str());
  }
  std::printf("  -2loglik %s   AIC %s\n", g(r.minus2loglik).c_str(), g(r.aic).c_str());
}

struct LoadedData {
  Dataset ds;
  Schema schema;
};

LoadedData load(const std::string& data_path, const std::string& schema_path) {
  LoadedData out{Dataset{}, load_schema(schema_path)};
  out.ds = load_dataset(data_path, out.schema);
  if (out.ds.x.empty()) throw std::invalid_argument("dataset has no usable rows");
  std::printf("loaded %zu rows (%zu dropped for missing declared cells)\n", out.ds.x.size(),
              out.ds.dropped_rows);
  return out;
}

int run_fit(const std::string& data_path, const std::string& schema_path,
            const std::string& family_arg, const std::string& out_dir) {
  const CopulaFamily family = parse_family(family_arg);
  auto [ds, schema] = load(data_path, schema_path);

  std::vector<std::string> names_x, names_y;
  const Eigen::MatrixXd Zx = encode_covariates(ds, schema.select_x, names_x);
  const Eigen::MatrixXd Zy = encode_covariates(ds, schema.select_y, names_y);
  const IfmResult ifm = ifm_fit_vectors(ds.x, ds.y, Zx, Zy, names_x, names_y, family);

  print_fit_report("margin X (NB2 regression)", ifm.report_x);
  print_fit_report("margin Y (NB2 regression)", ifm.report_y);
  std::printf("copula %s\n", family_name(family));
  std::printf("  theta_hat    %s%s\n", g(ifm.copula.theta).c_str(),
              ifm.copula.at_boundary ? "   [at search boundary]" : "");
  std::printf("  -2loglik     %s\n", g(-2.0 * ifm.copula.loglik).c_str());
  std::printf("  tau_hat      %s\n", g(ifm.tau_mean).c_str());
  std::printf("  rho_hat      %s\n", g(ifm.rho_mean).c_str());

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    nlohmann::json j;
    j["margin_x"] = fit_report_json(ifm.report_x);
    j["margin_y"] = fit_report_json(ifm.report_y);
    j["copula"] = {{"family", family_name(family)},
                   {"theta", ifm.copula.theta},
                   {"minus2loglik", -2.0 * ifm.copula.loglik},
                   {"at_boundary", ifm.copula.at_boundary},
                   {"tau", ifm.tau_mean},
                   {"rho", ifm.rho_mean}};
    write_text_file((fs::path(out_dir) / "fit.json").string(), j.dump(2) + "\n");
    std::printf("wrote %s/fit.json\n", out_dir.c_str());
  }
  return 0;
}

int run_analyze(const std::string& data_path, const std::string& schema_path,
                const std::string& family_arg, const std::string& out_dir) {
  const CopulaFamily family = parse_family(family_arg);
  auto [ds, schema] = load(data_path, schema_path);
  const AnalyzeResult res = analyze_dataset(ds, schema, family);

  auto print_gof = [](const char* label, const MarginGof& gof) {
    std::printf("goodness of fit, %s: NB2(mu=%s, psi=%s)\n", label, g(gof.fit.mu).c_str(),
                g(gof.fit.psi).c_str());
    std::printf("  %-8s %10s %12s\n", "value", "observed", "fitted");
    for (size_t i = 0; i < gof.observed.size(); ++i)
      std::printf("  %-8d %10lld %12s\n", gof.observed[i].first, gof.observed[i].second,
                  g(gof.gof.fitted[i]).c_str());
    std::printf("  chi-square %s   df %d   p-value %s\n", g(gof.gof.statistic).c_str(),
                gof.gof.df, g(gof.gof.p_value).c_str());
  };
  print_gof("X", res.gof_x);
  print_gof("Y", res.gof_y);

  print_fit_report("margin X (NB2 regression)", res.ifm.report_x);
  print_fit_report("margin Y (NB2 regression)", res.ifm.report_y);
  std::printf("copula %s: theta_hat %s, -2loglik %s, tau %s, rho %s\n", family_name(family),
              g(res.ifm.copula.theta).c_str(), g(-2.0 * res.ifm.copula.loglik).c_str(),
              g(res.ifm.tau_mean).c_str(), g(res.ifm.rho_mean).c_str());

  std::printf("P(X=x | Y=y), mean (sd) across patients; bottom row absorbs X tail\n");
  for (int x = 0; x <= res.conditionals.x_max; ++x) {
    std::printf("  x=%d:", x);
    for (int y = 0; y <= res.conditionals.y_max; ++y)
      std::printf(" %.4f (%.4f)", res.conditionals.mean[x][y], res.conditionals.sd[x][y]);
    std::printf("\n");
  }
  std::printf("E(X|Y=j) - E(X|Y=j-1), mean sd q1 q2 q3\n");
  for (const auto& d : res.deltas)
    std::printf("  j=%d: %.4f %.4f %.4f %.4f %.4f\n", d.j, d.mean, d.sd, d.q1, d.q2, d.q3);

  fs::create_directories(out_dir);
  write_text_file((fs::path(out_dir) / "report.json").string(),
                  analyze_result_json(res, family).dump(2) + "\n");
  write_text_file((fs::path(out_dir) / "conditional.csv").string(),
                  conditional_matrix_csv(res.conditionals));
  write_text_file((fs::path(out_dir) / "deltas.csv").string(), deltas_csv(res.deltas));
  std::printf("wrote %s/{report.json, conditional.csv, deltas.csv}\n", out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"copula dependence measures and count-data regression"};
  app.require_subcommand(1);

  // measure
  auto* measure = app.add_subcommand("measure", "population tau/rho for copula + count margins");
  std::string m_family, m_mx, m_my;
  double m_theta_val = 0.0;
  bool m_oracle = false;
  std::uint64_t m_seed = 1;
  measure->add_option("--family", m_family, "copula family")->required();
  auto* m_theta_opt = measure->add_option("--theta", m_theta_val, "dependence parameter");
  measure->add_option("--margin-x", m_mx, "margin spec, e.g. negbin:3,0.4")->required();
  measure->add_option("--margin-y", m_my, "margin spec, e.g. poisson:0.5")->required();
  measure->add_flag("--oracle", m_oracle, "also print brute-force and jittered cross-checks");
  measure->add_option("--seed", m_seed, "rng seed for the jittered cross-check");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "run a seeded replication study");
  std::string s_config, s_out = "study_out";
  int s_threads = 0;
  simulate->add_option("--config", s_config, "study config file (key = value lines)")->required();
  simulate->add_option("--out", s_out, "output directory");
  auto* s_threads_opt = simulate->add_option("--threads", s_threads, "worker threads");

  // fit
  auto* fit = app.add_subcommand("fit", "two-step IFM fit on a CSV dataset");
  std::string f_data, f_schema, f_family, f_out;
  fit->add_option("--data", f_data, "CSV file")->required();
  fit->add_option("--schema", f_schema, "schema JSON file")->required();
  fit->add_option("--family", f_family, "copula family")->required();
  fit->add_option("--out", f_out, "output directory for fit.json");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "full fit + conditional reports");
  std::string a_data, a_schema, a_family, a_out = "analyze_out";
  analyze->add_option("--data", a_data, "CSV file")->required();
  analyze->add_option("--schema", a_schema, "schema JSON file")->required();
  analyze->add_option("--family", a_family, "copula family")->required();
  analyze->add_option("--out", a_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (measure->parsed())
      return run_measure(m_family,
                         m_theta_opt->count() ? std::optional<double>(m_theta_val) : std::nullopt,
                         m_mx, m_my, m_oracle, m_seed);
    if (simulate->parsed())
      return run_simulate(s_config, s_out,
                          s_threads_opt->count() ? std::optional<int>(s_threads) : std::nullopt);
    if (fit->parsed()) return run_fit(f_data, f_schema, f_family, f_out);
    if (analyze->parsed()) return run_analyze(a_data, a_schema, a_family, a_out);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
