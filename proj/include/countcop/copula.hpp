#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "countcop/detail/optimize.hpp"
#include "countcop/rng.hpp"

namespace countcop {

enum class CopulaFamily {
  independence,
  frank,
  clayton,
  gumbel,          // Gumbel-Hougaard
  amh,             // Ali-Mikhail-Haq
  joe,
  frechet_lower,   // W(u,v) = max(u+v-1, 0)
  frechet_upper,   // M(u,v) = min(u,v)
};

inline bool family_has_theta(CopulaFamily f) {
  switch (f) {
    case CopulaFamily::independence:
    case CopulaFamily::frechet_lower:
    case CopulaFamily::frechet_upper:
      return false;
    default:
      return true;
  }
}

inline const char* family_name(CopulaFamily f) {
  switch (f) {
    case CopulaFamily::independence: return "independence";
    case CopulaFamily::frank: return "frank";
    case CopulaFamily::clayton: return "clayton";
    case CopulaFamily::gumbel: return "gumbel";
    case CopulaFamily::amh: return "amh";
    case CopulaFamily::joe: return "joe";
    case CopulaFamily::frechet_lower: return "frechet-lower";
    case CopulaFamily::frechet_upper: return "frechet-upper";
  }
  return "?";
}

inline CopulaFamily parse_family(const std::string& name) {
  if (name == "independence" || name == "indep") return CopulaFamily::independence;
  if (name == "frank") return CopulaFamily::frank;
  if (name == "clayton") return CopulaFamily::clayton;
  if (name == "gumbel" || name == "gumbel-hougaard") return CopulaFamily::gumbel;
  if (name == "amh" || name == "ali-mikhail-haq") return CopulaFamily::amh;
  if (name == "joe") return CopulaFamily::joe;
  if (name == "frechet-lower") return CopulaFamily::frechet_lower;
  if (name == "frechet-upper") return CopulaFamily::frechet_upper;
  throw std::invalid_argument("unknown copula family: '" + name + "'");
}

inline bool theta_in_domain(CopulaFamily f, double theta) {
  if (std::isnan(theta)) return false;
  switch (f) {
    case CopulaFamily::frank: return theta != 0.0;
    case CopulaFamily::clayton: return theta > 0.0;
    case CopulaFamily::gumbel: return theta >= 1.0;
    case CopulaFamily::amh: return theta >= -1.0 && theta < 1.0;
    case CopulaFamily::joe: return theta >= 1.0;
    default: return false;
  }
}

inline std::string theta_domain_text(CopulaFamily f) {
  switch (f) {
    case CopulaFamily::frank: return "theta != 0";
    case CopulaFamily::clayton: return "theta > 0";
    case CopulaFamily::gumbel: return "theta >= 1";
    case CopulaFamily::amh: return "-1 <= theta < 1";
    case CopulaFamily::joe: return "theta >= 1";
    default: return "no parameter";
  }
}

/// Copula family plus dependence parameter, validated at construction.
class CopulaSpec {
 public:
  explicit CopulaSpec(CopulaFamily f) : family_(f), theta_(0.0) {
    if (family_has_theta(f))
      throw std::invalid_argument(std::string(family_name(f)) + " copula requires theta (" +
                                  theta_domain_text(f) + ")");
  }

  CopulaSpec(CopulaFamily f, double theta) : family_(f), theta_(theta) {
    if (!family_has_theta(f))
      throw std::invalid_argument(std::string(family_name(f)) + " copula takes no parameter");
    if (!theta_in_domain(f, theta))
      throw std::invalid_argument(std::string(family_name(f)) + " copula: theta=" +
                                  std::to_string(theta) + " outside domain " + theta_domain_text(f));
  }

  CopulaFamily family() const { return family_; }
  double theta() const { return theta_; }

  std::string text() const {
    if (!family_has_theta(family_)) return family_name(family_);
    return std::string(family_name(family_)) + "(theta=" + std::to_string(theta_) + ")";
  }

 private:
  CopulaFamily family_;
  double theta_;
};

namespace detail {

inline void check_unit(double u, double v) {
  if (!(u >= 0.0 && u <= 1.0) || !(v >= 0.0 && v <= 1.0))
    throw std::invalid_argument("copula arguments must lie in [0,1]: u=" + std::to_string(u) +
                                ", v=" + std::to_string(v));
}

// Below this the Frank closed form is evaluated as the independence copula;
// the singularity at theta = 0 is removable.
constexpr double kFrankIndepEps = 1e-8;

// expm1(-th) + expm1(-th*u) * expm1(-th*v), regrouped so the two summands
// share a sign.  The naive grouping cancels catastrophically for large
// th*(1-max(u,v)) and can even round to zero.
inline double frank_denominator(double th, double u, double v) {
  return std::exp(-th * u) * std::expm1(-th * v) +
         std::exp(-th * v) * std::expm1(-th * (1.0 - v));
}

}  // namespace detail

/// C(u,v).  Exact on the unit-square boundary by construction.
inline double copula_cdf(const CopulaSpec& spec, double u, double v) {
  detail::check_unit(u, v);
  if (u == 0.0 || v == 0.0) return 0.0;
  if (u == 1.0) return v;
  if (v == 1.0) return u;
  const double th = spec.theta();
  switch (spec.family()) {
    case CopulaFamily::independence:
      return u * v;
    case CopulaFamily::frechet_lower:
      return std::max(u + v - 1.0, 0.0);
    case CopulaFamily::frechet_upper:
      return std::min(u, v);
    case CopulaFamily::frank: {
      if (std::fabs(th) < detail::kFrankIndepEps) return u * v;
      const double a = std::expm1(-th * u);
      const double b = std::expm1(-th * v);
      const double d = std::expm1(-th);
      const double t = a * b / d;
      // log1p amplifies rounding once t approaches -1; switch to the
      // cancellation-free denominator there.
      if (t > -0.5) return -std::log1p(t) / th;
      return -std::log(detail::frank_denominator(th, u, v) / d) / th;
    }
    case CopulaFamily::clayton: {
      const double s = std::pow(u, -th) + std::pow(v, -th) - 1.0;
      return std::pow(s, -1.0 / th);
    }
    case CopulaFamily::gumbel: {
      const double lu = -std::log(u);
      const double lv = -std::log(v);
      return std::exp(-std::pow(std::pow(lu, th) + std::pow(lv, th), 1.0 / th));
    }
    case CopulaFamily::amh:
      return u * v / (1.0 - th * (1.0 - u) * (1.0 - v));
    case CopulaFamily::joe: {
      const double a = std::pow(1.0 - u, th);
      const double b = std::pow(1.0 - v, th);
      return 1.0 - std::pow(a + b - a * b, 1.0 / th);
    }
  }
  throw std::logic_error("unreachable copula family");
}

/// dC/du at fixed u, a CDF in v.  Closed form for Frank/Clayton/AMH and the
/// parameter-free families; central finite difference (step 1e-6) for
/// Gumbel-Hougaard and Joe.
inline double conditional_cdf_given_u(const CopulaSpec& spec, double u, double v) {
  if (!(u > 0.0 && u < 1.0))
    throw std::invalid_argument("conditional_cdf_given_u: u must lie in (0,1), got " +
                                std::to_string(u));
  if (!(v >= 0.0 && v <= 1.0))
    throw std::invalid_argument("conditional_cdf_given_u: v must lie in [0,1], got " +
                                std::to_string(v));
  if (v == 0.0) return 0.0;
  if (v == 1.0) return 1.0;
  const double th = spec.theta();
  switch (spec.family()) {
    case CopulaFamily::independence:
      return v;
    case CopulaFamily::frechet_upper:
      return v >= u ? 1.0 : 0.0;   // V = U almost surely
    case CopulaFamily::frechet_lower:
      return v >= 1.0 - u ? 1.0 : 0.0;  // V = 1 - U almost surely
    case CopulaFamily::frank: {
      if (std::fabs(th) < detail::kFrankIndepEps) return v;
      const double b = std::expm1(-th * v);
      return std::exp(-th * u) * b / detail::frank_denominator(th, u, v);
    }
    case CopulaFamily::clayton: {
      const double s = std::pow(u, -th) + std::pow(v, -th) - 1.0;
      return std::pow(u, -th - 1.0) * std::pow(s, -1.0 / th - 1.0);
    }
    case CopulaFamily::amh: {
      const double s = 1.0 - th * (1.0 - u) * (1.0 - v);
      return v * (1.0 - th * (1.0 - v)) / (s * s);
    }
    case CopulaFamily::gumbel:
    case CopulaFamily::joe: {
      double h = 1e-6;
      if (u < 2.0 * h || u > 1.0 - 2.0 * h) h = std::min(u, 1.0 - u) / 2.0;
      const double p =
          (copula_cdf(spec, u + h, v) - copula_cdf(spec, u - h, v)) / (2.0 * h);
      return std::min(std::max(p, 0.0), 1.0);
    }
  }
  throw std::logic_error("unreachable copula family");
}

namespace detail {

constexpr double kInverseTol = 1e-10;
constexpr int kInverseMaxIter = 200;

// Solve conditional_cdf_given_u(spec, u, v) = w for v.  Closed-form inverse
// where the derivative inverts analytically (Frank, Clayton); bisection to
// 1e-10 otherwise.
inline double conditional_quantile_given_u(const CopulaSpec& spec, double u, double w) {
  switch (spec.family()) {
    case CopulaFamily::independence:
      return w;
    case CopulaFamily::frechet_upper:
      return u;
    case CopulaFamily::frechet_lower:
      return 1.0 - u;
    case CopulaFamily::frank: {
      const double th = spec.theta();
      if (std::fabs(th) < kFrankIndepEps) return w;
      const double a = std::expm1(-th * u);
      const double d = std::expm1(-th);
      const double b = w * d / ((a + 1.0) - w * a);
      return -std::log1p(b) / th;
    }
    case CopulaFamily::clayton: {
      const double th = spec.theta();
      const double t = std::pow(w * std::pow(u, th + 1.0), -th / (th + 1.0));
      return std::pow(t - std::pow(u, -th) + 1.0, -1.0 / th);
    }
    default:
      return bisect_increasing(
          [&](double v) { return conditional_cdf_given_u(spec, u, v); }, w, kInverseTol,
          kInverseMaxIter, family_name(spec.family()));
  }
}

}  // namespace detail

/// One (U,V) pair distributed per the copula: U uniform, V by conditional inversion.
inline std::pair<double, double> sample_pair(const CopulaSpec& spec, Rng& rng) {
  const double u = rng.uniform01();
  if (spec.family() == CopulaFamily::frechet_upper) return {u, u};
  if (spec.family() == CopulaFamily::frechet_lower) return {u, 1.0 - u};
  const double w = rng.uniform01();
  double v = detail::conditional_quantile_given_u(spec, u, w);
  v = std::min(std::max(v, 0.0), 1.0);
  return {u, v};
}

}  // namespace countcop
