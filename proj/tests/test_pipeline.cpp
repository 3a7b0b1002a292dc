#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "countcop/pipeline.hpp"

using namespace countcop;
using nlohmann::json;

namespace {

// dependent synthetic dataset with one binary covariate per margin
Dataset synthetic_dataset(int n, double theta, std::uint64_t seed) {
  Dataset ds;
  CovariateDef g;
  g.name = "G";
  g.column = "g";
  g.levels = {"a", "b"};
  g.reference = "a";
  ds.covariates = {g};
  Rng rng(seed);
  const CopulaSpec spec = theta == 0.0 ? CopulaSpec(CopulaFamily::independence)
                                       : CopulaSpec(CopulaFamily::frank, theta);
  for (int i = 0; i < n; ++i) {
    const int level = rng.uniform01() < 0.5 ? 0 : 1;
    const double mux = std::exp(-1.6 + 0.7 * level);
    const double muy = std::exp(-1.5);
    const auto [u, v] = sample_pair(spec, rng);
    ds.x.push_back(DiscreteMargin(Nb2{mux, 0.8}).quantile(u));
    ds.y.push_back(DiscreteMargin(Nb2{muy, 0.8}).quantile(v));
    ds.cov_levels.push_back({level});
  }
  return ds;
}

Schema synthetic_schema() {
  json j = {
      {"response_x", {{"column", "x"}}},
      {"response_y", {{"column", "y"}}},
      {"covariates",
       {{{"name", "G"}, {"column", "g"}, {"levels", {"a", "b"}}, {"reference", "a"}}}},
      {"select_x", {"G"}},
      {"select_y", json::array()},
  };
  return parse_schema(j);
}

}  // namespace

TEST_CASE("conditional pmf: independence reduces to the X margin") {
  const CopulaSpec indep(CopulaFamily::independence);
  const DiscreteMargin mx(Nb2{0.6, 0.9});
  const DiscreteMargin my(Poisson{0.4});
  for (int y : {0, 1, 3}) {
    const auto pmf = conditional_pmf(indep, mx, my, y);
    for (size_t x = 0; x < pmf.size(); ++x)
      CHECK_THAT(pmf[x], Catch::Matchers::WithinAbs(mx.pmf(static_cast<int>(x)), 1e-12));
  }
}

TEST_CASE("conditional pmf sums to one and rejects unobservable y") {
  const CopulaSpec spec(CopulaFamily::frank, 2.5);
  const DiscreteMargin mx(Nb2{0.2, 0.15});
  const DiscreteMargin my(Nb2{0.18, 0.16});
  for (int y : {0, 1, 2, 4}) {
    const auto pmf = conditional_pmf(spec, mx, my, y);
    const double total = std::accumulate(pmf.begin(), pmf.end(), 0.0);
    CHECK_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-8));
  }
  CHECK_THROWS_AS(conditional_pmf(spec, mx, my, -1), std::invalid_argument);
  CHECK_THROWS_AS(conditional_pmf(spec, mx, my, 100000), std::invalid_argument);
}

TEST_CASE("analyze: conditional columns sum to one, deltas vanish under independence") {
  const auto ds = synthetic_dataset(600, 0.0, 505);
  const auto res = analyze_dataset(ds, synthetic_schema(), CopulaFamily::frank);

  // every y column of the conditional matrix (last row absorbs the tail) sums to 1
  for (int y = 0; y <= res.conditionals.y_max; ++y) {
    double total = 0.0;
    for (int x = 0; x <= res.conditionals.x_max; ++x) total += res.conditionals.mean[x][y];
    CHECK_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-8));
  }
  // independent data: fitted dependence is near zero, so the deltas are small
  for (const auto& d : res.deltas) CHECK_THAT(d.mean, Catch::Matchers::WithinAbs(0.0, 0.05));
}

TEST_CASE("analyze: dependent data produce positive deltas and sane reports") {
  const auto ds = synthetic_dataset(900, 5.0, 99);
  const auto res = analyze_dataset(ds, synthetic_schema(), CopulaFamily::frank);
  CHECK(res.ifm.copula.theta > 1.5);
  CHECK(res.ifm.tau_mean > 0.05);
  for (const auto& d : res.deltas) {
    CHECK(d.mean > 0.0);
    CHECK(d.q1 <= d.q2);
    CHECK(d.q2 <= d.q3);
  }
  CHECK(res.gof_x.fit.mu > 0.0);
  CHECK(res.gof_y.gof.df >= 1);
}

TEST_CASE("exact zero deltas under the independence copula") {
  // conditional expectations from the independence copula do not depend on y
  const CopulaSpec indep(CopulaFamily::independence);
  const DiscreteMargin mx(Nb2{0.3, 0.5});
  const DiscreteMargin my(Nb2{0.25, 0.4});
  double prev = -1.0;
  for (int y : {0, 1, 2, 3}) {
    const auto pmf = conditional_pmf(indep, mx, my, y);
    double ex = 0.0;
    for (size_t x = 0; x < pmf.size(); ++x) ex += x * pmf[x];
    if (prev >= 0.0) CHECK_THAT(ex - prev, Catch::Matchers::WithinAbs(0.0, 1e-12));
    prev = ex;
  }
}

TEST_CASE("study serialization: CSV columns and JSON round trip") {
  StudyConfig cfg{CopulaFamily::gumbel,
                  {2.0},
                  DiscreteMargin(Poisson{0.5}),
                  DiscreteMargin(Poisson{0.5}),
                  {100},
                  25,
                  7,
                  false,
                  2};
  const auto result = run_study(cfg);
  const std::string csv = study_result_csv(result);
  CHECK(csv.find("family,theta,n,pop_tau,pop_rho,theta_mean,theta_sd,tau_mean,tau_sd,"
                 "rho_mean,rho_sd,ratio,excluded") == 0);
  CHECK(csv.find("gumbel,2,100") != std::string::npos);

  const json j = study_result_json(result);
  const json reparsed = json::parse(j.dump());
  CHECK(reparsed == j);
  CHECK(reparsed["cells"][0]["theta"].get<double>() == 2.0);
  CHECK(reparsed["cells"][0]["pop_tau"].get<double>() == result.cells[0].pop_tau);
}

TEST_CASE("ratio curve serialization has exactly three columns") {
  const auto pts = ratio_curve(
      CopulaFamily::frank, {1.0}, [](double p) { return DiscreteMargin(Poisson{p}); },
      {0.5, 1.0});
  const std::string csv = ratio_curve_csv(pts);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == "param,theta,ratio");
  while (std::getline(is, line))
    CHECK(std::count(line.begin(), line.end(), ',') == 2);
}

TEST_CASE("analyze report JSON reparses to identical values") {
  const auto ds = synthetic_dataset(400, 3.0, 17);
  const auto res = analyze_dataset(ds, synthetic_schema(), CopulaFamily::frank);
  const json j = analyze_result_json(res, CopulaFamily::frank);
  const json back = json::parse(j.dump());
  CHECK(back == j);
  CHECK(back["copula"]["family"] == "frank");
  CHECK(back["gof_x"]["mu"].get<double>() == res.gof_x.fit.mu);
}

TEST_CASE("pipeline determinism: same inputs give identical reports") {
  const auto ds = synthetic_dataset(500, 2.0, 4242);
  const auto a = analyze_dataset(ds, synthetic_schema(), CopulaFamily::clayton);
  const auto b = analyze_dataset(ds, synthetic_schema(), CopulaFamily::clayton);
  CHECK(analyze_result_json(a, CopulaFamily::clayton).dump() ==
        analyze_result_json(b, CopulaFamily::clayton).dump());
}

TEST_CASE("file emission fails loudly on unwritable paths") {
  CHECK_THROWS_AS(write_text_file("/nonexistent_dir_xyz/report.json", "{}"),
                  std::runtime_error);
}

TEST_CASE("backward elimination keeps real effects and drops noise") {
  // two covariates: G drives the mean, H is pure noise
  Dataset ds;
  CovariateDef g, h;
  g.name = "G";
  g.levels = {"a", "b"};
  g.reference = "a";
  h.name = "H";
  h.levels = {"u", "v", "w"};
  h.reference = "u";
  ds.covariates = {g, h};
  Rng rng(515);
  for (int i = 0; i < 1500; ++i) {
    const int gl = rng.uniform01() < 0.5 ? 0 : 1;
    const int hl = static_cast<int>(rng.uniform01() * 3);
    const double mu = std::exp(-1.2 + 1.1 * gl);
    ds.x.push_back(DiscreteMargin(Nb2{mu, 1.5}).quantile(rng.uniform01()));
    ds.y.push_back(0);
    ds.cov_levels.push_back({gl, hl});
  }
  const auto kept = backward_eliminate(ds, ds.x, {"G", "H"});
  CHECK(kept == std::vector<std::string>{"G"});
}

TEST_CASE("study config parser") {
  std::istringstream good(
      "# negative-binomial study\n"
      "family = frank\n"
      "theta = 0.5, 1, 3, 20\n"
      "margin_x = negbin:3,0.4\n"
      "margin_y = negbin:3,0.4\n"
      "sample_sizes = 100, 300, 800\n"
      "replications = 200\n"
      "seed = 20240811\n"
      "threads = 4\n");
  const auto cfg = parse_study_config(good);
  CHECK(cfg.family == CopulaFamily::frank);
  CHECK(cfg.thetas == std::vector<double>{0.5, 1.0, 3.0, 20.0});
  CHECK(cfg.sample_sizes == std::vector<int>{100, 300, 800});
  CHECK(cfg.replications == 200);
  CHECK(cfg.seed == 20240811ULL);
  CHECK(cfg.threads == 4);
  CHECK(cfg.margin_x.text() == "negbin:3,0.4");

  std::istringstream missing("family = frank\ntheta = 1\nmargin_x = poisson:1\n");
  CHECK_THROWS_AS(parse_study_config(missing), std::invalid_argument);

  std::istringstream garbled("family frank\n");
  CHECK_THROWS_AS(parse_study_config(garbled), std::invalid_argument);
}
