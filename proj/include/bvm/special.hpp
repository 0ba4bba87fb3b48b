#pragma once

// Incomplete gamma utilities, normal tail helpers and the quadrature rules
// shared by the limit-distribution and diagnostics code.

#include "bvm/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <functional>
#include <queue>
#include <utility>

namespace bvm {

// ---------------------------------------------------------------------------
// Incomplete gamma
// ---------------------------------------------------------------------------

namespace detail {

// Series for the lower regularized function P(a, x); valid for x < a + 1.
inline double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < 10000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(a * std::log(x) - x - std::lgamma(a));
}

// Modified Lentz continued fraction for Q(a, x); valid for x >= a + 1.
inline double gamma_q_cf(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return std::exp(a * std::log(x) - x - std::lgamma(a)) * h;
}

}  // namespace detail

// Upper regularized incomplete gamma Q(alpha, x) = Gamma((x, inf); alpha, 1).
inline double gamma_tail(double x, double alpha) {
  if (!(alpha > 0.0)) throw DomainError("gamma_tail: shape must be positive");
  if (!(x >= 0.0)) throw DomainError("gamma_tail: x must be nonnegative");
  if (x == 0.0) return 1.0;
  if (x == kInf) return 0.0;
  if (x < alpha + 1.0) return 1.0 - detail::gamma_p_series(alpha, x);
  return detail::gamma_q_cf(alpha, x);
}

// Lower regularized incomplete gamma P(alpha, x).
inline double gamma_lower(double x, double alpha) {
  if (!(alpha > 0.0)) throw DomainError("gamma_lower: shape must be positive");
  if (!(x >= 0.0)) throw DomainError("gamma_lower: x must be nonnegative");
  if (x == 0.0) return 0.0;
  if (x == kInf) return 1.0;
  if (x < alpha + 1.0) return detail::gamma_p_series(alpha, x);
  return 1.0 - detail::gamma_q_cf(alpha, x);
}

// gamma_alpha(beta): the point with Q(alpha, x) = beta. Newton iterations on
// t = log x inside a maintained bracket, bisection as fallback.
inline double gamma_quantile(double beta, double alpha) {
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("gamma_quantile: beta must lie in (0,1)");
  if (!(alpha > 0.0)) throw DomainError("gamma_quantile: shape must be positive");
  auto f = [&](double t) { return gamma_tail(std::exp(t), alpha) - beta; };
  double lo = -700.0;
  double hi = std::log(std::max(1.0, alpha)) + 1.0;
  while (f(hi) > 0.0) hi += 1.0;
  if (f(lo) < 0.0) return std::exp(lo);
  double t = 0.5 * (lo + hi);
  const double lg = std::lgamma(alpha);
  for (int it = 0; it < 300; ++it) {
    const double ft = f(t);
    if (ft > 0.0) lo = t; else hi = t;
    // d/dt Q(alpha, e^t) = -exp(alpha t - e^t) / Gamma(alpha)
    const double deriv = -std::exp(alpha * t - std::exp(t) - lg);
    double next = (deriv != 0.0 && std::isfinite(deriv)) ? t - ft / deriv : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) < 1e-13 * (1.0 + std::abs(t)) || hi - lo < 1e-14) {
      t = next;
      break;
    }
    t = next;
  }
  return std::exp(t);
}

// ---------------------------------------------------------------------------
// Normal distribution helpers
// ---------------------------------------------------------------------------

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// log(1 - Phi(x)), accurate far into the upper tail.
inline double log_normal_sf(double x) {
  if (x < 30.0) return std::log(0.5 * std::erfc(x / std::sqrt(2.0)));
  // Asymptotic expansion of the Mills ratio.
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -0.5 * x2 - std::log(x) - 0.5 * std::log(2.0 * kPi) + std::log(series);
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
  long evaluations = 0;
  bool converged = true;
};

namespace detail {

inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
Panel gk15(F& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double k = fc * kKronrodWeights[7];
  double g = fc * kGaussWeights[3];
  for (int i = 0; i < 7; ++i) {
    const double x = h * kKronrodNodes[i];
    const double f1 = f(c - x), f2 = f(c + x);
    k += kKronrodWeights[i] * (f1 + f2);
    if (i % 2 == 1) g += kGaussWeights[i / 2] * (f1 + f2);
  }
  return {a, b, k * h, std::abs((k - g) * h)};
}

}  // namespace detail

// Globally adaptive Gauss-Kronrod (7/15) on a finite interval.
// `initial_panels` equal pieces seed the subdivision, which keeps a narrow
// peak inside a wide window from being missed by the first rule.
template <class F>
QuadResult integrate_gk(F&& f, double a, double b, double abs_tol = 0.0, double rel_tol = 1e-11,
                        int max_panels = 4000, int initial_panels = 1) {
  QuadResult out;
  if (a == b) return out;
  std::priority_queue<detail::Panel> heap;
  double total = 0.0, err = 0.0;
  initial_panels = std::max(1, initial_panels);
  for (int k = 0; k < initial_panels; ++k) {
    const double lo = a + (b - a) * k / initial_panels;
    const double hi = (k + 1 == initial_panels) ? b : a + (b - a) * (k + 1) / initial_panels;
    auto pn = detail::gk15(f, lo, hi);
    total += pn.value;
    err += pn.error;
    heap.push(pn);
  }
  out.evaluations = 15L * initial_panels;
  int panels = initial_panels;
  max_panels = std::max(max_panels, initial_panels + 1);
  while (err > std::max(abs_tol, rel_tol * std::abs(total))) {
    if (panels >= max_panels) {
      out.converged = false;
      break;
    }
    auto worst = heap.top();
    heap.pop();
    const double m = 0.5 * (worst.a + worst.b);
    if (!(m > worst.a && m < worst.b)) {  // interval exhausted at machine precision
      heap.push(worst);
      out.converged = false;
      break;
    }
    auto l = detail::gk15(f, worst.a, m);
    auto r = detail::gk15(f, m, worst.b);
    out.evaluations += 30;
    total += l.value + r.value - worst.value;
    err += l.error + r.error - worst.error;
    heap.push(l);
    heap.push(r);
    ++panels;
  }
  // Recompute the sums to shed accumulated round-off from the running totals.
  total = 0.0;
  err = 0.0;
  while (!heap.empty()) {
    total += heap.top().value;
    err += heap.top().error;
    heap.pop();
  }
  out.value = total;
  out.error = err;
  return out;
}

// Gauss-Jacobi rule for the weight (1-x)^a (1+x)^b on [-1,1], via Golub-Welsch.
struct GaussRule {
  Vector nodes;
  Vector weights;
};

inline GaussRule gauss_jacobi(int n, double a, double b) {
  if (n < 1) throw DomainError("gauss_jacobi: need at least one node");
  if (!(a > -1.0 && b > -1.0)) throw DomainError("gauss_jacobi: exponents must exceed -1");
  Vector diag(n), off(std::max(n - 1, 1));
  const double ab = a + b;
  for (int k = 0; k < n; ++k) {
    if (k == 0) {
      diag[k] = (b - a) / (ab + 2.0);
    } else {
      const double s = 2.0 * k + ab;
      diag[k] = (b * b - a * a) / (s * (s + 2.0));
    }
  }
  for (int k = 1; k < n; ++k) {
    double beta;
    if (k == 1) {
      beta = 4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab) * (2.0 + ab) * (3.0 + ab));
    } else {
      const double s = 2.0 * k + ab;
      beta = 4.0 * k * (k + a) * (k + b) * (k + ab) / (s * s * (s + 1.0) * (s - 1.0));
    }
    off[k - 1] = std::sqrt(beta);
  }
  const double log_mu0 = (ab + 1.0) * std::log(2.0) + std::lgamma(a + 1.0) + std::lgamma(b + 1.0) -
                         std::lgamma(ab + 2.0);
  GaussRule rule;
  if (n == 1) {
    rule.nodes = Vector::Constant(1, diag[0]);
    rule.weights = Vector::Constant(1, std::exp(log_mu0));
    return rule;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es;
  es.computeFromTridiagonal(diag, off.head(n - 1), Eigen::ComputeEigenvectors);
  rule.nodes = es.eigenvalues();
  rule.weights.resize(n);
  for (int k = 0; k < n; ++k) {
    const double v = es.eigenvectors()(0, k);
    rule.weights[k] = std::exp(log_mu0) * v * v;
  }
  return rule;
}

// Tanh-sinh rule on [a, b]; tolerates integrable algebraic singularities at
// both endpoints. The integrand is never evaluated exactly at an endpoint.
// tmax near 6 reaches distances of 1e-300 from the endpoints, which strong
// singularities such as x^-0.95 need.
template <class F>
QuadResult integrate_tanh_sinh(F&& f, double a, double b, double rel_tol = 1e-12,
                               int max_level = 9, double tmax = 3.2) {
  QuadResult out;
  if (a == b) return out;
  const double half = 0.5 * (b - a);
  auto point_value = [&](double t) -> double {
    const double u = 0.5 * kPi * std::sinh(t);
    const double w = 0.5 * kPi * std::cosh(t) / (std::cosh(u) * std::cosh(u));
    // distance from the nearer endpoint, computed without cancellation
    const double compl_ = 2.0 / (std::exp(2.0 * std::abs(u)) + 1.0);  // 1 - |tanh u|
    const double x = (u < 0.0) ? a + half * compl_ : b - half * compl_;
    if (!(x > a && x < b) || w == 0.0) return 0.0;
    const double fx = f(x);
    ++out.evaluations;
    return std::isfinite(fx) ? w * fx : 0.0;
  };
  double h = 1.0;
  double sum = point_value(0.0);
  for (double t = h; t <= tmax; t += h) sum += point_value(t) + point_value(-t);
  double est = sum * h * half;
  double prev = est;
  for (int level = 1; level <= max_level; ++level) {
    h *= 0.5;
    for (double t = h; t <= tmax; t += 2.0 * h) sum += point_value(t) + point_value(-t);
    est = sum * h * half;
    out.error = std::abs(est - prev);
    if (level >= 3 && out.error <= rel_tol * std::abs(est)) {
      out.value = est;
      return out;
    }
    if (level >= 3 && est == 0.0 && prev == 0.0) {
      out.value = 0.0;
      out.error = 0.0;
      return out;
    }
    prev = est;
  }
  out.value = est;
  out.converged = out.error <= std::max(1e3 * rel_tol * std::abs(est), 1e-300);
  return out;
}

// Bracketed root of a continuous function (Brent-Dekker).
template <class F>
double brent_root(F&& f, double a, double b, double tol = 1e-14, int max_iter = 200) {
  double fa = f(a), fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa > 0.0) == (fb > 0.0)) throw NumericalError("brent_root: root not bracketed");
  double c = a, fc = fa, d = b - a, e = d;
  for (int it = 0; it < max_iter; ++it) {
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b; b = c; c = a;
      fa = fb; fb = fc; fc = fa;
    }
    const double tol1 = 2.0 * 2.2e-16 * std::abs(b) + 0.5 * tol;
    const double xm = 0.5 * (c - b);
    if (std::abs(xm) <= tol1 || fb == 0.0) return b;
    if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
      double p, q, r;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * xm * s;
        q = 1.0 - s;
      } else {
        q = fa / fc;
        r = fb / fc;
        p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
        q = (q - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q;
      p = std::abs(p);
      if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b;
    fa = fb;
    b += (std::abs(d) > tol1) ? d : (xm > 0.0 ? tol1 : -tol1);
    fb = f(b);
  }
  return b;
}

}  // namespace bvm
