#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "countcop/bivariate.hpp"
#include "countcop/concordance.hpp"

using namespace countcop;

namespace {

BivariateCountModel model(CopulaSpec spec, DiscreteMargin mx, DiscreteMargin my) {
  return BivariateCountModel{spec, std::move(mx), std::move(my)};
}

const DiscreteMargin kNb34{NegBin{3, 0.4}};
const DiscreteMargin kPois05{Poisson{0.5}};
const DiscreteMargin kBern05{Bernoulli{0.5}};

}  // namespace

TEST_CASE("joint pmf basics") {
  const auto indep = model(CopulaSpec(CopulaFamily::independence), kBern05, kBern05);
  CHECK_THAT(joint_pmf(indep, 0, 0), Catch::Matchers::WithinAbs(0.25, 1e-14));

  const auto upper = model(CopulaSpec(CopulaFamily::frechet_upper), kBern05, kBern05);
  CHECK(joint_pmf(upper, 0, 1) == 0.0);
  CHECK(joint_pmf(upper, 1, 0) == 0.0);
  CHECK_THAT(joint_pmf(upper, 1, 1), Catch::Matchers::WithinAbs(0.5, 1e-14));

  CHECK_THROWS_AS(joint_pmf(indep, -1, 0), std::invalid_argument);

  // Bernoulli identities: h(0,0) = C(1-pX,1-pY), h(1,1) = pX+pY+C(1-pX,1-pY)-1
  const double px = 0.3, py = 0.6;
  const CopulaSpec frank2(CopulaFamily::frank, 2.0);
  const auto m = model(frank2, DiscreteMargin(Bernoulli{px}), DiscreteMargin(Bernoulli{py}));
  const double c = copula_cdf(frank2, 1.0 - px, 1.0 - py);
  CHECK_THAT(joint_pmf(m, 0, 0), Catch::Matchers::WithinAbs(c, 1e-14));
  CHECK_THAT(joint_pmf(m, 1, 1), Catch::Matchers::WithinAbs(px + py + c - 1.0, 1e-14));
}

TEST_CASE("joint pmf sums to one over the truncated grid") {
  const std::vector<BivariateCountModel> models = {
      model(CopulaSpec(CopulaFamily::frank, 3.0), kNb34, kNb34),
      model(CopulaSpec(CopulaFamily::clayton, 20.0), kPois05, kNb34),
      model(CopulaSpec(CopulaFamily::gumbel, 2.0), kPois05, kPois05),
      model(CopulaSpec(CopulaFamily::frechet_lower), kBern05, kPois05),
  };
  for (const auto& m : models) {
    const int kx = m.margin_x.truncation_point(1e-12);
    const int ky = m.margin_y.truncation_point(1e-12);
    double total = 0.0;
    for (int x = 0; x <= kx; ++x)
      for (int y = 0; y <= ky; ++y) total += joint_pmf(m, x, y);
    CHECK_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-10));
  }
}

TEST_CASE("independence with symmetric Bernoulli margins gives zero tau and rho") {
  const auto m = model(CopulaSpec(CopulaFamily::independence), kBern05, kBern05);
  CHECK_THAT(kendall_tau(m), Catch::Matchers::WithinAbs(0.0, 1e-14));
  CHECK_THAT(spearman_rho(m), Catch::Matchers::WithinAbs(0.0, 1e-14));
}

TEST_CASE("population values: Negative Binomial margins") {
  auto tau_rho = [](CopulaFamily f, double th) {
    const auto m = model(CopulaSpec(f, th), kNb34, kNb34);
    return std::make_pair(kendall_tau(m), spearman_rho(m));
  };
  auto [t1, r1] = tau_rho(CopulaFamily::frank, 3.0);
  CHECK_THAT(t1, Catch::Matchers::WithinAbs(0.300, 0.002));
  CHECK_THAT(r1, Catch::Matchers::WithinAbs(0.439, 0.002));
  auto [t2, r2] = tau_rho(CopulaFamily::clayton, 20.0);
  CHECK_THAT(t2, Catch::Matchers::WithinAbs(0.837, 0.002));
  CHECK_THAT(r2, Catch::Matchers::WithinAbs(0.968, 0.002));
  auto [t3, r3] = tau_rho(CopulaFamily::gumbel, 2.0);
  CHECK_THAT(t3, Catch::Matchers::WithinAbs(0.487, 0.002));
  CHECK_THAT(r3, Catch::Matchers::WithinAbs(0.668, 0.002));
}

TEST_CASE("population values: Poisson margins") {
  auto tau_rho = [](CopulaFamily f, double th) {
    const auto m = model(CopulaSpec(f, th), kPois05, kPois05);
    return std::make_pair(kendall_tau(m), spearman_rho(m));
  };
  auto [t1, r1] = tau_rho(CopulaFamily::clayton, 2.0);
  CHECK_THAT(t1, Catch::Matchers::WithinAbs(0.228, 0.002));
  CHECK_THAT(r1, Catch::Matchers::WithinAbs(0.342, 0.002));
  auto [t2, r2] = tau_rho(CopulaFamily::gumbel, 3.0);
  CHECK_THAT(t2, Catch::Matchers::WithinAbs(0.385, 0.002));
  CHECK_THAT(r2, Catch::Matchers::WithinAbs(0.554, 0.002));
}

TEST_CASE("population values: mixed Poisson(0.5) and Negative Binomial margins") {
  // The mixed-margin reference values are only reproduced by lambda = 0.5;
  // lambda = 0.4 misses every cell by up to 0.07.
  const auto m = model(CopulaSpec(CopulaFamily::frank, 2.0), kPois05, kNb34);
  CHECK_THAT(kendall_tau(m), Catch::Matchers::WithinAbs(0.157, 0.002));
  CHECK_THAT(spearman_rho(m), Catch::Matchers::WithinAbs(0.235, 0.002));
  const auto g = model(CopulaSpec(CopulaFamily::gumbel, 3.0), kPois05, kNb34);
  CHECK_THAT(kendall_tau(g), Catch::Matchers::WithinAbs(0.452, 0.002));
  CHECK_THAT(spearman_rho(g), Catch::Matchers::WithinAbs(0.643, 0.002));
}

TEST_CASE("Bernoulli closed forms: linearity, bounds, Frechet extremes") {
  const std::vector<CopulaSpec> specs = [] {
    std::vector<CopulaSpec> out;
    for (int i = 0; i < 20; ++i) {
      out.emplace_back(CopulaFamily::frank, -12.0 + 25.0 * i / 19.0 + 0.013);
      out.emplace_back(CopulaFamily::clayton, 0.05 + 18.0 * i / 19.0);
      out.emplace_back(CopulaFamily::gumbel, 1.0 + 15.0 * i / 19.0);
      out.emplace_back(CopulaFamily::amh, -0.95 + 1.9 * i / 19.0);
      out.emplace_back(CopulaFamily::joe, 1.0 + 15.0 * i / 19.0);
    }
    return out;
  }();
  const double ps[] = {0.1, 0.25, 0.5, 0.75, 0.9};
  for (const auto& spec : specs)
    for (double px : ps)
      for (double py : {0.2, 0.5, 0.8}) {
        const double rho = spearman_rho_bernoulli(spec, px, py);
        const double tau = kendall_tau_bernoulli(spec, px, py);
        CHECK_THAT(rho, Catch::Matchers::WithinAbs(1.5 * tau, 1e-12));
        CHECK(std::fabs(rho) <= 0.75 + 1e-9);
        CHECK(std::fabs(tau) <= 0.5 + 1e-9);
      }

  CHECK_THAT(spearman_rho_bernoulli(CopulaSpec(CopulaFamily::frechet_upper), 0.5, 0.5),
             Catch::Matchers::WithinAbs(0.75, 1e-14));
  CHECK_THAT(spearman_rho_bernoulli(CopulaSpec(CopulaFamily::frechet_lower), 0.5, 0.5),
             Catch::Matchers::WithinAbs(-0.75, 1e-14));
  CHECK_THAT(kendall_tau_bernoulli(CopulaSpec(CopulaFamily::frechet_upper), 0.5, 0.5),
             Catch::Matchers::WithinAbs(0.5, 1e-14));
  CHECK_THAT(kendall_tau_bernoulli(CopulaSpec(CopulaFamily::frechet_lower), 0.5, 0.5),
             Catch::Matchers::WithinAbs(-0.5, 1e-14));
  CHECK_THAT(spearman_rho_bernoulli(CopulaSpec(CopulaFamily::independence), 0.3, 0.8),
             Catch::Matchers::WithinAbs(0.0, 1e-14));
}

TEST_CASE("general sums agree with the Bernoulli closed forms") {
  for (const auto& spec : {CopulaSpec(CopulaFamily::frank, 4.0),
                           CopulaSpec(CopulaFamily::clayton, 1.2),
                           CopulaSpec(CopulaFamily::gumbel, 2.5),
                           CopulaSpec(CopulaFamily::amh, -0.7),
                           CopulaSpec(CopulaFamily::joe, 3.0)}) {
    for (double px : {0.2, 0.5})
      for (double py : {0.35, 0.8}) {
        const auto m =
            model(spec, DiscreteMargin(Bernoulli{px}), DiscreteMargin(Bernoulli{py}));
        CHECK_THAT(spearman_rho(m),
                   Catch::Matchers::WithinAbs(spearman_rho_bernoulli(spec, px, py), 1e-10));
        CHECK_THAT(kendall_tau(m),
                   Catch::Matchers::WithinAbs(kendall_tau_bernoulli(spec, px, py), 1e-10));
      }
  }
}

TEST_CASE("oracle triangle: explicit sums, brute-force probabilities, jittered sample") {
  const std::vector<BivariateCountModel> models = {
      model(CopulaSpec(CopulaFamily::frank, 3.0), kPois05, kPois05),
      model(CopulaSpec(CopulaFamily::clayton, 1.0), kBern05, kPois05),
      model(CopulaSpec(CopulaFamily::frechet_upper), kBern05, kBern05),
      model(CopulaSpec(CopulaFamily::amh, 0.9), DiscreteMargin(Binomial{5, 0.3}), kPois05),
      model(CopulaSpec(CopulaFamily::joe, 2.0), DiscreteMargin(Binomial{4, 0.6}),
            DiscreteMargin(Bernoulli{0.25})),
  };
  std::uint64_t seed = 11;
  for (const auto& m : models) {
    INFO(m.copula.text() << " x " << m.margin_x.text() << " x " << m.margin_y.text());
    const double rho = spearman_rho(m);
    const double tau = kendall_tau(m);

    // the oracle truncates each margin at tail mass 1e-8, so its
    // probabilities close to one only within that truncation
    const auto probs = concordance_probabilities(m);
    CHECK_THAT(probs.p_concordance + probs.p_discordance + probs.p_tie,
               Catch::Matchers::WithinAbs(1.0, 5e-8));
    CHECK_THAT(3.0 * (probs.p_concordance - probs.p_discordance),
               Catch::Matchers::WithinAbs(rho, 5e-3));

    const auto two = kendall_concordance_probabilities(m);
    CHECK_THAT(two.p_concordance + two.p_discordance + two.p_tie,
               Catch::Matchers::WithinAbs(1.0, 5e-8));
    CHECK_THAT(two.p_concordance - two.p_discordance, Catch::Matchers::WithinAbs(tau, 5e-3));

    Rng rng(seed++);
    CHECK_THAT(jittered_rho_estimate(m, 20000, rng), Catch::Matchers::WithinAbs(rho, 0.02));
  }
}

TEST_CASE("dependence(): closure, ratio definedness, consistency of both routes") {
  const auto dep = dependence(model(CopulaSpec(CopulaFamily::frank, 3.0), kNb34, kNb34));
  CHECK_THAT(dep.p_concordance + dep.p_discordance + dep.p_tie,
             Catch::Matchers::WithinAbs(1.0, 1e-10));
  // rho from the explicit sums must match 3(P(C) - P(D)) computed from the
  // same grid to rounding
  CHECK_THAT(3.0 * (dep.p_concordance - dep.p_discordance),
             Catch::Matchers::WithinAbs(dep.rho, 1e-10));
  REQUIRE(dep.ratio.has_value());
  CHECK_THAT(*dep.ratio, Catch::Matchers::WithinAbs(dep.rho / dep.tau, 1e-14));

  const auto indep = dependence(model(CopulaSpec(CopulaFamily::independence), kNb34, kPois05));
  CHECK(std::fabs(indep.tau) < 1e-9);
  CHECK_FALSE(indep.ratio.has_value());
}

TEST_CASE("tau and rho are nondecreasing in theta for the positive families") {
  struct Case {
    CopulaFamily family;
    std::vector<double> thetas;
  };
  const std::vector<Case> cases = {
      {CopulaFamily::frank, {0.25, 0.5, 1.0, 2.0, 3.0, 6.0, 12.0, 20.0}},
      {CopulaFamily::clayton, {0.25, 0.5, 1.0, 2.0, 3.0, 6.0, 12.0, 20.0}},
      {CopulaFamily::gumbel, {1.0, 1.25, 1.5, 2.0, 3.0, 6.0, 12.0, 20.0}},
  };
  for (const auto& c : cases) {
    double prev_tau = -2.0, prev_rho = -2.0;
    for (double th : c.thetas) {
      const auto dep = dependence(model(CopulaSpec(c.family, th), kPois05, kNb34));
      INFO(family_name(c.family) << " theta=" << th);
      CHECK(dep.tau >= prev_tau - 1e-12);
      CHECK(dep.rho >= prev_rho - 1e-12);
      prev_tau = dep.tau;
      prev_rho = dep.rho;
    }
  }
}

TEST_CASE("ratio curve: Bernoulli margins pin the ratio at exactly 1.5") {
  const auto pts = ratio_curve(
      CopulaFamily::frank, {0.5, 2.0, 5.0},
      [](double p) { return DiscreteMargin(Bernoulli{p}); }, {0.2, 0.4, 0.6, 0.8});
  REQUIRE(pts.size() == 12);
  for (const auto& pt : pts) {
    REQUIRE(pt.ratio.has_value());
    CHECK_THAT(*pt.ratio, Catch::Matchers::WithinAbs(1.5, 1e-9));
  }
}

TEST_CASE("ratio curve: reference ratios and the 1.5 cap") {
  const auto pts = ratio_curve(
      CopulaFamily::frank, {3.0, 20.0},
      [](double p) { return DiscreteMargin(NegBin{3, p}); }, {0.4});
  REQUIRE(pts.size() == 2);
  REQUIRE(pts[0].ratio.has_value());
  CHECK_THAT(*pts[0].ratio, Catch::Matchers::WithinAbs(1.463, 0.002));
  REQUIRE(pts[1].ratio.has_value());
  CHECK(*pts[1].ratio >= 1.208 - 0.002);
  CHECK(*pts[1].ratio <= 1.212 + 0.002);
  for (const auto& pt : pts) CHECK(*pt.ratio <= 1.5 + 1e-6);

  // independence points are emitted as undefined
  const auto indep = ratio_curve(
      CopulaFamily::independence, {0.0},
      [](double p) { return DiscreteMargin(Poisson{p}); }, {0.5, 1.0});
  for (const auto& pt : indep) CHECK_FALSE(pt.ratio.has_value());
}

TEST_CASE("concordance oracle rejects oversized supports") {
  const auto big = model(CopulaSpec(CopulaFamily::frank, 1.0), DiscreteMargin(Poisson{400.0}),
                         kPois05);
  CHECK_THROWS_AS(concordance_probabilities(big), std::invalid_argument);
}

TEST_CASE("jittered estimate requires a real sample") {
  const auto m = model(CopulaSpec(CopulaFamily::independence), kPois05, kPois05);
  Rng rng(3);
  CHECK_THROWS_AS(jittered_rho_estimate(m, 500, rng), std::invalid_argument);
  CHECK_THAT(jittered_rho_estimate(m, 20000, rng), Catch::Matchers::WithinAbs(0.0, 0.025));
}
