#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace countcop::detail {

struct BrentResult {
  double x = 0.0;
  double fx = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Brent's golden-section/parabolic minimizer on [lo, hi] with an absolute
// tolerance in x.  The objective is assumed continuous and unimodal enough;
// for our likelihoods that holds over the documented parameter boxes.
template <class F>
BrentResult brent_minimize(F f, double lo, double hi, double xtol, int maxit = 200) {
  constexpr double golden = 0.3819660112501051;
  const double eps = std::sqrt(std::numeric_limits<double>::epsilon());

  double a = lo, b = hi;
  double x = a + golden * (b - a);
  double w = x, v = x;
  double fx = f(x), fw = fx, fv = fx;
  double d = 0.0, e = 0.0;

  BrentResult res;
  for (int iter = 0; iter < maxit; ++iter) {
    const double xm = 0.5 * (a + b);
    const double tol1 = eps * std::fabs(x) + xtol;
    const double tol2 = 2.0 * tol1;
    if (std::fabs(x - xm) <= tol2 - 0.5 * (b - a)) {
      res.x = x;
      res.fx = fx;
      res.iterations = iter;
      res.converged = true;
      return res;
    }
    bool take_golden = true;
    if (std::fabs(e) > tol1) {
      // parabolic interpolation through (v,fv), (w,fw), (x,fx)
      const double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::fabs(q);
      const double e_old = e;
      e = d;
      if (std::fabs(p) < std::fabs(0.5 * q * e_old) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = (xm > x) ? tol1 : -tol1;
        take_golden = false;
      }
    }
    if (take_golden) {
      e = (x < xm) ? b - x : a - x;
      d = golden * e;
    }
    const double u = (std::fabs(d) >= tol1) ? x + d : x + ((d > 0.0) ? tol1 : -tol1);
    const double fu = f(u);
    if (fu <= fx) {
      if (u < x) b = x; else a = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  res.x = x;
  res.fx = fx;
  res.iterations = maxit;
  res.converged = false;
  return res;
}

// Bisection for a monotone nondecreasing g on [0,1]: smallest-interval point
// with g(v) = target.  Interval tolerance `tol`; hard iteration cap with
// diagnostics, matching the sampling contract.
template <class G>
double bisect_increasing(G g, double target, double tol, int maxit, const char* what) {
  double lo = 0.0, hi = 1.0;
  for (int iter = 0; iter < maxit; ++iter) {
    if (hi - lo <= tol) return 0.5 * (lo + hi);
    const double mid = 0.5 * (lo + hi);
    if (g(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  if (hi - lo <= tol) return 0.5 * (lo + hi);
  throw std::runtime_error(std::string("bisection failed to converge for ") + what +
                           ": interval [" + std::to_string(lo) + ", " + std::to_string(hi) +
                           "] after " + std::to_string(maxit) + " iterations");
}

}  // namespace countcop::detail
