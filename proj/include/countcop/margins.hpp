#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace countcop {

struct Bernoulli {
  double p;
};
struct Binomial {
  int n;
  double p;
};
struct Poisson {
  double lambda;
};
// Counts the number of failures before r successes.
struct NegBin {
  double r;
  double p;
};
// Mean/overdispersion parameterization; variance = mu * (1 + mu/psi).
struct Nb2 {
  double mu;
  double psi;
};

/// Count distribution used as a margin: pmf, cdf, quantile, truncation.
class DiscreteMargin {
 public:
  using Variant = std::variant<Bernoulli, Binomial, Poisson, NegBin, Nb2>;

  explicit DiscreteMargin(Bernoulli b) : v_(b) {
    if (!(b.p > 0.0 && b.p < 1.0)) throw std::invalid_argument("bernoulli: p must lie in (0,1)");
  }
  explicit DiscreteMargin(Binomial b) : v_(b) {
    if (b.n <= 0) throw std::invalid_argument("binomial: n must be positive");
    if (!(b.p > 0.0 && b.p < 1.0)) throw std::invalid_argument("binomial: p must lie in (0,1)");
  }
  explicit DiscreteMargin(Poisson p) : v_(p) {
    if (!(p.lambda > 0.0)) throw std::invalid_argument("poisson: lambda must be positive");
  }
  explicit DiscreteMargin(NegBin nb) : v_(nb) {
    if (!(nb.r > 0.0)) throw std::invalid_argument("negbin: r must be positive");
    if (!(nb.p > 0.0 && nb.p < 1.0)) throw std::invalid_argument("negbin: p must lie in (0,1)");
  }
  explicit DiscreteMargin(Nb2 nb) : v_(nb) {
    if (!(nb.mu > 0.0)) throw std::invalid_argument("nb2: mu must be positive");
    if (!(nb.psi > 0.0)) throw std::invalid_argument("nb2: psi must be positive");
  }

  const Variant& variant() const { return v_; }

  double log_pmf(int k) const {
    if (k < 0) return -std::numeric_limits<double>::infinity();
    return std::visit(
        [k](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, Bernoulli>) {
            if (k == 0) return std::log1p(-m.p);
            if (k == 1) return std::log(m.p);
            return -std::numeric_limits<double>::infinity();
          } else if constexpr (std::is_same_v<T, Binomial>) {
            if (k > m.n) return -std::numeric_limits<double>::infinity();
            return std::lgamma(m.n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(m.n - k + 1.0) +
                   k * std::log(m.p) + (m.n - k) * std::log1p(-m.p);
          } else if constexpr (std::is_same_v<T, Poisson>) {
            return k * std::log(m.lambda) - m.lambda - std::lgamma(k + 1.0);
          } else if constexpr (std::is_same_v<T, NegBin>) {
            return std::lgamma(m.r + k) - std::lgamma(m.r) - std::lgamma(k + 1.0) +
                   m.r * std::log(m.p) + k * std::log1p(-m.p);
          } else {  // Nb2
            const double t = m.mu + m.psi;
            return std::lgamma(m.psi + k) - std::lgamma(m.psi) - std::lgamma(k + 1.0) +
                   m.psi * std::log(m.psi / t) + k * std::log(m.mu / t);
          }
        },
        v_);
  }

  double pmf(int k) const {
    if (k < 0) throw std::invalid_argument("pmf: k must be nonnegative");
    return std::exp(log_pmf(k));
  }

  /// F(k) = sum_{j<=k} pmf(j); F(-1) = 0.  Any integer k is allowed.
  double cdf(int k) const {
    if (k < 0) return 0.0;
    double acc = 0.0;
    for (int j = 0; j <= k; ++j) {
      acc += std::exp(log_pmf(j));
      if (acc >= 1.0) return 1.0;
    }
    return std::min(acc, 1.0);
  }

  /// Smallest k with cdf(k) >= q, for q in [0,1).
  int quantile(double q) const {
    if (!(q >= 0.0 && q < 1.0))
      throw std::invalid_argument("quantile: q must lie in [0,1), got " + std::to_string(q));
    double acc = 0.0;
    for (int k = 0;; ++k) {
      acc += std::exp(log_pmf(k));
      if (acc >= q) return k;
      // cdf has saturated in double precision; q cannot be resolved further
      if (acc >= 1.0 - 1e-15) return k;
    }
  }

  /// quantile(1 - tail): summation cutoff with omitted mass <= tail.
  int truncation_point(double tail) const {
    if (!(tail > 0.0 && tail <= 0.01))
      throw std::invalid_argument("truncation_point: tail must lie in (0, 0.01]");
    return quantile(1.0 - tail);
  }

  double mean() const {
    return std::visit(
        [](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, Bernoulli>) return m.p;
          else if constexpr (std::is_same_v<T, Binomial>) return m.n * m.p;
          else if constexpr (std::is_same_v<T, Poisson>) return m.lambda;
          else if constexpr (std::is_same_v<T, NegBin>) return m.r * (1.0 - m.p) / m.p;
          else return m.mu;
        },
        v_);
  }

  double variance() const {
    return std::visit(
        [](const auto& m) -> double {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, Bernoulli>) return m.p * (1.0 - m.p);
          else if constexpr (std::is_same_v<T, Binomial>) return m.n * m.p * (1.0 - m.p);
          else if constexpr (std::is_same_v<T, Poisson>) return m.lambda;
          else if constexpr (std::is_same_v<T, NegBin>) return m.r * (1.0 - m.p) / (m.p * m.p);
          else return m.mu * (1.0 + m.mu / m.psi);
        },
        v_);
  }

  std::string text() const {
    std::ostringstream os;
    std::visit(
        [&os](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, Bernoulli>) os << "bernoulli:" << m.p;
          else if constexpr (std::is_same_v<T, Binomial>) os << "binomial:" << m.n << "," << m.p;
          else if constexpr (std::is_same_v<T, Poisson>) os << "poisson:" << m.lambda;
          else if constexpr (std::is_same_v<T, NegBin>) os << "negbin:" << m.r << "," << m.p;
          else os << "nb2:" << m.mu << "," << m.psi;
        },
        v_);
    return os.str();
  }

 private:
  Variant v_;
};

/// Parse the margin mini-grammar: name:params, e.g. "poisson:0.5",
/// "negbin:3,0.4", "bernoulli:0.5", "binomial:5,0.3", "nb2:0.15,0.14".
inline DiscreteMargin parse_margin(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("margin spec '" + spec + "' lacks ':' (expected name:params)");
  const std::string name = spec.substr(0, colon);
  std::vector<double> params;
  {
    std::string rest = spec.substr(colon + 1);
    std::stringstream ss(rest);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      size_t pos = 0;
      double val;
      try {
        val = std::stod(tok, &pos);
      } catch (const std::exception&) {
        throw std::invalid_argument("margin spec '" + spec + "': bad number '" + tok + "'");
      }
      if (pos != tok.size())
        throw std::invalid_argument("margin spec '" + spec + "': bad number '" + tok + "'");
      params.push_back(val);
    }
  }
  auto need = [&](size_t n) {
    if (params.size() != n)
      throw std::invalid_argument("margin spec '" + spec + "': expected " + std::to_string(n) +
                                  " parameter(s), got " + std::to_string(params.size()));
  };
  if (name == "bernoulli") {
    need(1);
    return DiscreteMargin(Bernoulli{params[0]});
  }
  if (name == "binomial") {
    need(2);
    const double n_real = params[0];
    if (n_real != std::floor(n_real))
      throw std::invalid_argument("margin spec '" + spec + "': binomial n must be an integer");
    return DiscreteMargin(Binomial{static_cast<int>(n_real), params[1]});
  }
  if (name == "poisson") {
    need(1);
    return DiscreteMargin(Poisson{params[0]});
  }
  if (name == "negbin") {
    need(2);
    return DiscreteMargin(NegBin{params[0], params[1]});
  }
  if (name == "nb2") {
    need(2);
    return DiscreteMargin(Nb2{params[0], params[1]});
  }
  throw std::invalid_argument("margin spec '" + spec + "': unknown distribution '" + name + "'");
}

/// Cached pmf/cdf over [0, K], K = truncation_point(tail).
struct MarginTable {
  std::vector<double> pmf;  // pmf[k]
  std::vector<double> cdf;  // cdf[k]
  int K = 0;

  double cdf_at(int k) const {
    if (k < 0) return 0.0;
    if (k >= K) return cdf[K];
    return cdf[k];
  }
  double pmf_at(int k) const {
    if (k < 0 || k > K) return 0.0;
    return pmf[k];
  }
  /// Smallest k with cdf(k) >= q (binary search over the cached table).
  int quantile(double q) const {
    int lo = 0, hi = K;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (cdf[mid] >= q)
        hi = mid;
      else
        lo = mid + 1;
    }
    return lo;
  }
};

inline MarginTable build_margin_table(const DiscreteMargin& m, double tail = 1e-12) {
  MarginTable t;
  t.K = m.truncation_point(tail);
  t.pmf.resize(t.K + 1);
  t.cdf.resize(t.K + 1);
  double acc = 0.0;
  for (int k = 0; k <= t.K; ++k) {
    t.pmf[k] = std::exp(m.log_pmf(k));
    acc += t.pmf[k];
    t.cdf[k] = std::min(acc, 1.0);
  }
  return t;
}

}  // namespace countcop
