#pragma once

// Comparison tools: one-dimensional total variation by quadrature, the
// nonasymptotic bound with its constants, credible intervals, agreement
// tables between a chain and the plug-in approximation, linear functionals,
// the separation check and the outside-neighbourhood mass.
//
// Total variation uses the convention ||mu1 - mu2|| = int |f1 - f2|, so values
// lie in [0, 2].

#include "bvm/boundary.hpp"
#include "bvm/limitdist.hpp"
#include "bvm/mcmc.hpp"
#include "bvm/spect.hpp"

#include <algorithm>
#include <functional>

namespace bvm {

using LogDensity1D = std::function<double(double)>;

struct TVEstimate {
  double value = 0.0;
  double error = 0.0;
  enum class Method { Quadrature1D, HistogramKD } method = Method::Quadrature1D;
};

struct TVOptions {
  double scale = 1.0;      // breakpoints at lo + scale * 4^k
  int min_power = -12;
  int max_power = 24;
  double rel_tol = 1e-12;
  int scan_points = 64;
};

namespace detail {

inline std::vector<double> tv_breakpoints(double lo, double hi, const TVOptions& o) {
  std::vector<double> b{lo};
  for (int k = o.min_power; k <= o.max_power; ++k) {
    const double x = lo + o.scale * std::pow(4.0, k);
    if (x >= hi) break;
    b.push_back(x);
  }
  if (std::isfinite(hi)) b.push_back(hi);
  return b;
}

// Tanh-sinh reaching 1e-300 from the left end of the first panel.
template <class F>
QuadResult tv_panel(F&& f, double a, double b, bool first, double tol) {
  return integrate_tanh_sinh(f, a, b, tol, 10, first ? 6.1 : 3.2);
}

}  // namespace detail

// int |f_a - f_b| for two unnormalized log-densities on [lo, hi]. For an
// infinite hi, mass beyond lo + scale * 4^max_power is ignored.
inline TVEstimate tv_quadrature_1d(const LogDensity1D& logf_a, const LogDensity1D& logf_b, double lo, double hi,
                                   TVOptions opt = {}) {
  if (!(hi > lo)) throw DomainError("tv_quadrature_1d: empty support");
  const auto br = detail::tv_breakpoints(lo, hi, opt);
  // Global log shifts from a scan of all panels.
  double ma = -kInf, mb = -kInf;
  for (std::size_t k = 0; k + 1 < br.size(); ++k)
    for (int i = 1; i < opt.scan_points; ++i) {
      const double x = br[k] + (br[k + 1] - br[k]) * i / opt.scan_points;
      const double la = logf_a(x), lb = logf_b(x);
      if (std::isfinite(la)) ma = std::max(ma, la);
      if (std::isfinite(lb)) mb = std::max(mb, lb);
    }
  if (!std::isfinite(ma) || !std::isfinite(mb)) throw NumericalError("tv_quadrature_1d: density vanishes on the scan");
  auto fa = [&](double x) { return std::exp(logf_a(x) - ma); };
  auto fb = [&](double x) { return std::exp(logf_b(x) - mb); };
  double za = 0.0, zb = 0.0, ea = 0.0, eb = 0.0;
  for (std::size_t k = 0; k + 1 < br.size(); ++k) {
    const auto ra = detail::tv_panel(fa, br[k], br[k + 1], k == 0, opt.rel_tol);
    const auto rb = detail::tv_panel(fb, br[k], br[k + 1], k == 0, opt.rel_tol);
    za += ra.value;
    zb += rb.value;
    ea += ra.error;
    eb += rb.error;
  }
  if (!(za > 0.0 && zb > 0.0) || !std::isfinite(za) || !std::isfinite(zb))
    throw NumericalError("tv_quadrature_1d: normalizer diverged");
  auto diff = [&](double x) { return fa(x) / za - fb(x) / zb; };
  TVEstimate out;
  for (std::size_t k = 0; k + 1 < br.size(); ++k) {
    const double a = br[k], b = br[k + 1];
    std::vector<double> cuts{a};
    // differences at round-off level carry no sign information
    auto signed_diff = [&](double x) {
      const double d = diff(x);
      return std::abs(d) <= 1e-13 * (fa(x) / za + fb(x) / zb) ? 0.0 : d;
    };
    double prev_x = a, prev_d = 0.0;
    for (int i = 1; i < opt.scan_points; ++i) {
      const double x = a + (b - a) * i / opt.scan_points;
      const double d = signed_diff(x);
      if (d == 0.0) continue;
      if (prev_d != 0.0 && (d > 0.0) != (prev_d > 0.0))
        cuts.push_back(brent_root(diff, prev_x, x, 1e-15 * std::max(1.0, std::abs(x))));
      prev_x = x;
      prev_d = d;
    }
    cuts.push_back(b);
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      auto absd = [&](double x) { return std::abs(diff(x)); };
      const auto r = detail::tv_panel(absd, cuts[c], cuts[c + 1], k == 0 && c == 0, opt.rel_tol);
      out.value += r.value;
      out.error += r.error;
    }
  }
  out.error += ea / za + eb / zb;
  out.value = std::clamp(out.value, 0.0, 2.0);
  return out;
}

// ---------------------------------------------------------------------------
// Nonasymptotic bound
// ---------------------------------------------------------------------------

struct BoundInput {
  LocalQuadratic lq;
  BoundaryPartition part;
  ParameterPoint theta_star;
  Radii delta;
  Radii dstar;
  double delta_pi = 0.0;   // prior variation on the neighbourhood
  double c_pi = 1.0;       // prior level constant
  double delta0 = 0.0;     // scaled posterior mass outside the neighbourhood
  double c0 = kInf, c1 = kInf;  // boundary geometry constants
  std::size_t mc_draws = 100000;
  std::uint64_t seed = 20240601;
};

struct BoundFlags {
  bool dstar1_below_amin = true;
  bool dstar0_below_lambda = true;
  bool delta0_below_norm = true;
  bool delta0_below_c0 = true;
  bool delta1_below_c1 = true;
  bool a0_inside = true;
  bool all() const {
    return dstar1_below_amin && dstar0_below_lambda && delta0_below_norm && delta0_below_c0 && delta1_below_c1 &&
           a0_inside;
  }
};

struct BoundReport {
  BoundFlags flags;
  bool admissible = false;
  // The four summands in order: Gamma block, PTN block, prior, consistency.
  double term_gamma = 0.0, term_ptn = 0.0, term_prior = 0.0, term_consistency = 0.0;
  double total = kNaN;
  // Same constants combined additively, as in the chain of inequalities that
  // produces the bound: 2 mu*(outside) + C_D D0 + 2 C0 d*0 + 2 C1 d*1 + C2 D_pi.
  double total_additive = kNaN;
  double C0 = 0.0, C1 = 0.0, C2 = 0.0, C_Delta = 0.0, C_A = 0.0, C_alpha0 = 0.0, E_Phi = 0.0, p_alpha0 = 0.0;
  double gamma_tail_max = 0.0, ptn_tail = 0.0;
  double mc_rel_error = 0.0;
};

namespace detail {

// log of int_{V0} tilt exp(-v' S v / 2 + v' b) dv, and the PTN object.
struct TiltedGaussMass {
  double log_mass;
  PTN ptn;
};

inline TiltedGaussMass tilted_gauss_mass(const Matrix& S, const Vector& b, Index t, const Vector& alpha0) {
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) throw DomainError("tv_bound: perturbed precision is not positive definite");
  const Vector m = llt.solve(b);
  PTN d(m, S, t, alpha0);
  const auto z = ptn_normalizer(d);
  return {z.log_value + 0.5 * m.dot(b), std::move(d)};
}

}  // namespace detail

inline BoundReport tv_bound(const BoundInput& in) {
  const auto& lq = in.lq;
  const auto& part = in.part;
  const double sigma = lq.sigma;
  const Index p0 = part.p0(), p1 = part.p1(), t = part.p0_star();
  BoundReport rep;
  const double amin = lq.a_min();
  const double lmin = lq.lambda_min();
  rep.flags.dstar1_below_amin = p1 == 0 || in.dstar.d1 < amin;
  rep.flags.dstar0_below_lambda = p0 == 0 || in.dstar.d0 < lmin;
  {
    double nrm = 0.0;
    for (Index j : part.s0()) nrm += in.theta_star[j] * in.theta_star[j];
    // vacuous when no coordinate of S0 is interior
    rep.flags.delta0_below_norm = part.s0_interior.empty() || in.delta.d0 < std::sqrt(nrm);
  }
  rep.flags.delta0_below_c0 = in.delta.d0 <= in.c0;
  rep.flags.delta1_below_c1 = in.delta.d1 <= in.c1;
  const double a0n = p0 ? lq.a0.norm() : 0.0;
  rep.flags.a0_inside = p0 == 0 || a0n < in.delta.d0 / sigma;
  rep.admissible = rep.flags.all() && in.delta_pi < 1.0;
  if (!rep.admissible) return rep;

  const double dpi = in.delta_pi;
  const double prior_ratio = (1.0 + dpi) / (1.0 - dpi);
  const double R1 = in.delta.d1 / (sigma * sigma);
  const double R0 = in.delta.d0 / sigma;

  // Gamma block: unnormalized masses of the bar/tilde measures.
  double log_ratio_gamma = 0.0;  // log mu_bar(R+^p1) - log mu_tilde([0,R1)^p1)
  double sum_alpha_over = 0.0;
  for (Index j = 0; j < p1; ++j) {
    const double a = lq.a1[j], al = lq.alpha1[j];
    const double at = a + in.dstar.d1, ab = a - in.dstar.d1;
    log_ratio_gamma += al * (std::log(at) - std::log(ab)) - std::log(gamma_lower(at * R1, al));
    sum_alpha_over += al / ab;
    rep.gamma_tail_max = std::max(rep.gamma_tail_max, gamma_tail(a * R1, al));
  }

  // PTN block.
  double log_ratio_ptn = 0.0;
  double log_mu0_v0 = 0.0;      // log int_{V0} tilt exp(-v' Omega v/2 + v' Omega a0)
  double log_tilde_ball = 0.0;  // log mu_tilde restricted to B_{R,0}
  rep.p_alpha0 = static_cast<double>(p0);
  for (Index j = 0; j < t; ++j) rep.p_alpha0 += lq.alpha0[j] - 1.0;
  if (p0 > 0) {
    const Matrix I = Matrix::Identity(p0, p0);
    const Vector b = lq.omega * lq.a0;
    const auto bar = detail::tilted_gauss_mass(lq.omega - in.dstar.d0 * I, b, t, lq.alpha0);
    const auto tilde = detail::tilted_gauss_mass(lq.omega + in.dstar.d0 * I, b, t, lq.alpha0);
    const auto base = detail::tilted_gauss_mass(lq.omega, b, t, lq.alpha0);
    log_mu0_v0 = base.log_mass;
    // PTN(B_{R,0}) under the tilde parameters, by sampling.
    std::mt19937_64 rng(in.seed);
    const Matrix X = ptn_sample(tilde.ptn, rng, static_cast<Index>(in.mc_draws));
    double inside = 0.0;
    for (Index n = 0; n < X.rows(); ++n) inside += X.row(n).norm() < R0 ? 1.0 : 0.0;
    const double N = static_cast<double>(X.rows());
    const double pin = inside / N;
    if (!(pin > 0.0)) throw NumericalError("tv_bound: no draws inside the neighbourhood image");
    rep.mc_rel_error = std::sqrt(pin * (1.0 - pin) / N) / pin;
    log_tilde_ball = tilde.log_mass + std::log(pin);
    log_ratio_ptn = bar.log_mass - log_tilde_ball;
    // E_Phi = E ||w||^2 / 2 under the bar PTN.
    if (t == 0) {
      const Matrix Sb = (lq.omega - in.dstar.d0 * I).inverse();
      rep.E_Phi = 0.5 * (Sb * b).squaredNorm() + 0.5 * Sb.trace();
    } else if (t <= 3) {
      rep.E_Phi = 0.5 * ptn_moments_quadrature(bar.ptn).second.trace();
    } else {
      std::mt19937_64 rng2(in.seed + 1);
      rep.E_Phi = 0.5 * ptn_moments_mc(bar.ptn, rng2, static_cast<Index>(in.mc_draws)).second.trace();
    }
    // C_alpha0, with mu_0(V*) the unnormalized mass of mu_0.
    double log_mu0 = log_mu0_v0;
    for (Index j = 0; j < p1; ++j) log_mu0 += std::lgamma(lq.alpha1[j]) - lq.alpha1[j] * std::log(lq.a1[j]);
    double log_c = log_mu0 + (-static_cast<double>(t) + 1.5 * rep.p_alpha0) * std::log(2.0) +
                   0.5 * rep.p_alpha0 * std::log(lmin) + 0.5 * static_cast<double>(p0 - t) * std::log(kPi);
    for (Index j = 0; j < t; ++j) log_c += std::lgamma(0.5 * lq.alpha0[j]);
    rep.C_alpha0 = std::exp(log_c);
    const double x = 0.5 * lmin * (R0 - a0n) * (R0 - a0n);
    rep.ptn_tail = gamma_tail(x, 0.5 * rep.p_alpha0);
  }

  rep.C_A = std::exp(log_ratio_ptn + log_ratio_gamma) * prior_ratio;
  rep.C0 = rep.C_A * rep.E_Phi;
  rep.C1 = rep.C_A * sum_alpha_over;
  rep.C2 = 4.0 / (1.0 - dpi);
  // mu_tilde(B_R) as an unnormalized mass
  double log_mu_tilde = log_tilde_ball;
  for (Index j = 0; j < p1; ++j) {
    const double at = lq.a1[j] + in.dstar.d1, al = lq.alpha1[j];
    log_mu_tilde += std::lgamma(al) - al * std::log(at) + std::log(gamma_lower(at * R1, al));
  }
  rep.C_Delta = 2.0 / (in.c_pi * (1.0 - dpi) * std::exp(log_mu_tilde));

  rep.term_gamma = p1 ? 2.0 * std::max(rep.C1 * in.dstar.d1, static_cast<double>(p1) * rep.gamma_tail_max) : 0.0;
  rep.term_ptn = p0 ? 2.0 * std::max(rep.C0 * in.dstar.d0, rep.C_alpha0 * rep.ptn_tail) : 0.0;
  rep.term_prior = rep.C2 * dpi;
  rep.term_consistency = rep.C_Delta * in.delta0;
  rep.total = rep.term_gamma + rep.term_ptn + rep.term_prior + rep.term_consistency;
  const double outside = static_cast<double>(p1) * rep.gamma_tail_max + (p0 ? rep.C_alpha0 * rep.ptn_tail : 0.0);
  rep.total_additive = 2.0 * outside + rep.term_consistency + 2.0 * rep.C0 * in.dstar.d0 +
                       2.0 * rep.C1 * in.dstar.d1 + rep.term_prior;
  return rep;
}

// ---------------------------------------------------------------------------
// Outside-neighbourhood mass
// ---------------------------------------------------------------------------

inline double neighbourhood_scale_exponent(const BoundaryPartition& part, const Vector& alpha0, const Vector& alpha1) {
  double e = static_cast<double>(part.p0());
  for (Index j = 0; j < alpha0.size(); ++j) e += alpha0[j] - 1.0;
  for (Index j = 0; j < alpha1.size(); ++j) e += 2.0 * alpha1[j];
  return e;
}

// Delta_0(delta) by quadrature for p <= 2 with at most one S0 coordinate.
// log_kernel(theta) must return (l_Y(theta) - l_Y(theta*)) / sigma^2 + log prior.
inline double delta0_numeric(const std::function<double(const Vector&)>& log_kernel, const BoundaryPartition& part,
                             const ParameterPoint& theta_star, Radii delta, double sigma, const Vector& alpha0,
                             const Vector& alpha1, const Vector& upper) {
  const Index p = part.p();
  if (p > 2 || part.p0() > 1) throw UnsupportedError("delta0_numeric: needs p <= 2 and at most one S0 coordinate");
  require_dim(upper.size(), p, "delta0_numeric upper limits");
  const double scale = std::pow(sigma, -neighbourhood_scale_exponent(part, alpha0, alpha1));
  // Inner interval [lo_j, hi_j) of the neighbourhood in coordinate j.
  std::vector<double> lo(static_cast<std::size_t>(p)), hi(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) {
    const bool in_s1 = std::find(part.s1.begin(), part.s1.end(), j) != part.s1.end();
    if (in_s1) {
      lo[j] = 0.0;
      hi[j] = std::min(delta.d1, upper[j]);
    } else {
      lo[j] = std::max(0.0, theta_star[j] - delta.d0);
      hi[j] = std::min(theta_star[j] + delta.d0, upper[j]);
    }
  }
  auto pieces = [&](Index j, bool outside) {
    std::vector<std::pair<double, double>> out;
    if (outside) {
      if (lo[j] > 0.0) out.emplace_back(0.0, lo[j]);
      if (hi[j] < upper[j]) out.emplace_back(hi[j], upper[j]);
    } else {
      out.emplace_back(lo[j], hi[j]);
    }
    return out;
  };
  auto integrate_1d = [&](auto&& f, double a, double b) {
    return integrate_tanh_sinh(f, a, b, 1e-10, 10, a == 0.0 ? 6.1 : 3.2).value;
  };
  Vector th(p);
  double total = 0.0;
  if (p == 1) {
    for (auto [a, b] : pieces(0, true)) total += integrate_1d([&](double x) { th[0] = x; return std::exp(log_kernel(th)); }, a, b);
  } else {
    // outside = {x0 outside} x all  +  {x0 inside} x {x1 outside}
    auto inner_all = [&](double x0) {
      double s = 0.0;
      for (auto [a, b] : pieces(1, false)) s += integrate_1d([&](double x1) { th[0] = x0; th[1] = x1; return std::exp(log_kernel(th)); }, a, b);
      for (auto [a, b] : pieces(1, true)) s += integrate_1d([&](double x1) { th[0] = x0; th[1] = x1; return std::exp(log_kernel(th)); }, a, b);
      return s;
    };
    auto inner_out = [&](double x0) {
      double s = 0.0;
      for (auto [a, b] : pieces(1, true)) s += integrate_1d([&](double x1) { th[0] = x0; th[1] = x1; return std::exp(log_kernel(th)); }, a, b);
      return s;
    };
    for (auto [a, b] : pieces(0, true)) total += integrate_1d(inner_all, a, b);
    for (auto [a, b] : pieces(0, false)) total += integrate_1d(inner_out, a, b);
  }
  return scale * total;
}

// Upper bound on Delta_0 from the linear decay condition: given C_d0, C_d1,
// C_pi0 with l_Y(theta) - l_Y(theta*) <= -C_d0 |theta_S0 - theta*_S0|_1 -
// C_d1 |theta_S1|_1 outside the neighbourhood and prior density bounded by
// C_pi0 prod theta_j^(alpha_j - 1). A union bound over the coordinate that
// leaves the neighbourhood gives a sum of one-dimensional tails.
inline double delta0_linear_bound(const BoundaryPartition& part, const ParameterPoint& theta_star, Radii delta,
                                  double sigma, const Vector& alpha0, const Vector& alpha1, double c_d0,
                                  double c_d1, double c_pi0) {
  const double s2 = sigma * sigma;
  const double p0 = static_cast<double>(part.p0());
  const double d0 = p0 > 0 ? delta.d0 / std::sqrt(p0) : 0.0;
  std::vector<double> full, tail;
  for (std::size_t k = 0; k < part.s0_interior.size(); ++k) {
    (void)theta_star;
    full.push_back(2.0 * s2 / c_d0);
    tail.push_back(2.0 * s2 / c_d0 * std::exp(-c_d0 * d0 / s2));
  }
  for (Index k = 0; k < alpha0.size(); ++k) {
    const double a = alpha0[k], m = std::exp(std::lgamma(a)) * std::pow(s2 / c_d0, a);
    full.push_back(m);
    tail.push_back(m * gamma_tail(c_d0 * d0 / s2, a));
  }
  for (Index k = 0; k < alpha1.size(); ++k) {
    const double a = alpha1[k], m = std::exp(std::lgamma(a)) * std::pow(s2 / c_d1, a);
    full.push_back(m);
    tail.push_back(m * gamma_tail(c_d1 * delta.d1 / s2, a));
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < full.size(); ++j) {
    double prod = tail[j];
    for (std::size_t k = 0; k < full.size(); ++k)
      if (k != j) prod *= full[k];
    sum += prod;
  }
  return c_pi0 * std::pow(sigma, -neighbourhood_scale_exponent(part, alpha0, alpha1)) * sum;
}

// ---------------------------------------------------------------------------
// Credible intervals
// ---------------------------------------------------------------------------

struct Interval {
  double lo, hi;
};

// Boundary coordinate with Gamma(alpha, a1) limit in v = theta / sigma^2.
inline Interval gamma_credible_interval(double alpha, double a1, double beta, double sigma) {
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("credible interval: level must lie in (0, 1)");
  return {0.0, gamma_quantile(beta, alpha) * sigma * sigma / a1};
}

// Equal-tail interval for coordinate k (permuted order) of the limit measure,
// mapped back to theta_j = theta*_j + scale * v_k.
template <class Rng>
Interval limit_credible_interval(const LimitMeasure& mu, Index k, double beta, double sigma, double theta_star_j,
                                 Rng& rng, Index draws = 100000) {
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("credible interval: level must lie in (0, 1)");
  if (k >= mu.p0()) {
    const Index j = k - mu.p0();
    auto ci = gamma_credible_interval(mu.shapes()[j], mu.rates()[j], beta, sigma);
    return {theta_star_j + ci.lo, theta_star_j + ci.hi};
  }
  const Matrix X = ptn_sample(mu.ptn(), rng, draws);
  std::vector<double> v(X.col(k).data(), X.col(k).data() + X.rows());
  std::sort(v.begin(), v.end());
  auto q = [&](double f) { return v[static_cast<std::size_t>(std::clamp(f * (v.size() - 1), 0.0, v.size() - 1.0))]; };
  return {theta_star_j + sigma * q(0.5 * beta), theta_star_j + sigma * q(1.0 - 0.5 * beta)};
}

// ---------------------------------------------------------------------------
// Agreement between a chain and the plug-in approximation
// ---------------------------------------------------------------------------

struct AgreementRow {
  Index pixel;
  double predicted;  // a_hat_j, or sigma^2 (Omega^{-1})_jj
  double observed;   // sigma^2 / mean_j, or var_j
  double rel_error;
};

struct AgreementTable {
  std::vector<AgreementRow> s1, s0;
  double s1_median = kNaN, s1_p90 = kNaN, s0_median = kNaN, s0_p90 = kNaN;
};

namespace detail {

inline double quantile_of(std::vector<double> v, double f) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const double pos = f * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

inline AgreementTable agreement_stats(const ChainOutput& chain, const PluginApprox& pa, double sigma,
                                      bool include_truncated = true) {
  require_dim(chain.samples.cols(), pa.p(), "agreement_stats");
  const double s2 = sigma * sigma;
  AgreementTable tab;
  std::vector<double> e1, e0;
  for (std::size_t k = 0; k < pa.s1.size(); ++k) {
    const Index j = pa.s1[k];
    const auto mo = marginal_moments(chain, j);
    const double pred = pa.a_hat[static_cast<Index>(k)];
    const double obs = s2 / mo.mean;
    tab.s1.push_back({j, pred, obs, std::abs(obs - pred) / pred});
    e1.push_back(tab.s1.back().rel_error);
  }
  if (!pa.s0.empty()) {
    const Matrix cov = pa.omega.inverse();
    for (std::size_t k = 0; k < pa.s0.size(); ++k) {
      const Index j = pa.s0[k];
      if (!include_truncated && std::binary_search(pa.s0_star.begin(), pa.s0_star.end(), j)) continue;
      const auto mo = marginal_moments(chain, j);
      const double pred = s2 * cov(static_cast<Index>(k), static_cast<Index>(k));
      tab.s0.push_back({j, pred, mo.var, std::abs(mo.var - pred) / pred});
      e0.push_back(tab.s0.back().rel_error);
    }
  }
  tab.s1_median = detail::quantile_of(e1, 0.5);
  tab.s1_p90 = detail::quantile_of(e1, 0.9);
  tab.s0_median = detail::quantile_of(e0, 0.5);
  tab.s0_p90 = detail::quantile_of(e0, 0.9);
  return tab;
}

// ---------------------------------------------------------------------------
// Linear functionals w' theta
// ---------------------------------------------------------------------------

struct FunctionalSummary {
  double mean = 0.0, var = 0.0;
  Interval interval{0.0, 0.0};
};

namespace detail {

inline FunctionalSummary summarize(const Vector& x, double level) {
  FunctionalSummary s;
  const double n = static_cast<double>(x.size());
  s.mean = x.mean();
  s.var = x.size() > 1 ? (x.array() - s.mean).square().sum() / (n - 1.0) : 0.0;
  std::vector<double> v(x.data(), x.data() + x.size());
  s.interval = {quantile_of(v, 0.5 * (1.0 - level)), quantile_of(v, 1.0 - 0.5 * (1.0 - level))};
  return s;
}

}  // namespace detail

inline FunctionalSummary region_functional(const ChainOutput& chain, const Vector& w, double level = 0.95) {
  require_dim(w.size(), chain.samples.cols(), "region_functional weights");
  if (!w.allFinite()) throw DomainError("region_functional: weights must be finite");
  return detail::summarize(chain.samples * w, level);
}

template <class Rng>
FunctionalSummary region_functional(const PluginApprox& pa, const Vector& w, Rng& rng, Index draws = 100000,
                                    double level = 0.95) {
  require_dim(w.size(), pa.p(), "region_functional weights");
  if (!w.allFinite()) throw DomainError("region_functional: weights must be finite");
  if (w.isZero(0.0)) return {};
  const LimitMeasure mu = plugin_limit_measure(pa);
  const Matrix V = limit_sample(mu, rng, draws);
  const IndexList ord = pa.order();
  const Index p0 = static_cast<Index>(pa.s0.size());
  Vector x = Vector::Constant(draws, w.dot(pa.theta_hat));
  for (std::size_t k = 0; k < ord.size(); ++k) {
    const double scale = static_cast<Index>(k) < p0 ? pa.sigma : pa.sigma * pa.sigma;
    x += w[ord[k]] * scale * V.col(static_cast<Index>(k));
  }
  return detail::summarize(x, level);
}

// ---------------------------------------------------------------------------
// Linear decay check outside the neighbourhood
// ---------------------------------------------------------------------------

struct SeparationReport {
  std::size_t points = 0;        // grid points outside the neighbourhood
  double c_common = kInf;        // largest C with diff <= -C (s0 + s1)
  double c_delta0 = kInf;        // largest C0 with diff <= -C0 s0 (C1 = 0)
  double c_delta1 = kInf;        // largest C1 with diff <= -C1 s1 (C0 = 0)
  bool large0 = false, large1 = false;   // C_dk delta_k / sigma^2 >= 10
  std::size_t violations_given = 0;      // violations for user-supplied constants
  double max_violation_given = 0.0;
};

inline SeparationReport separation_check(const ScaledLikelihood& model, const BoundaryPartition& part,
                                         const ParameterPoint& theta_star, Radii delta, const std::vector<Vector>& grid,
                                         std::optional<std::pair<double, double>> given = {}) {
  SeparationReport rep;
  const Vector& ts = theta_star.values();
  const double l_star = model.value(ts);
  const IndexList s0 = part.s0();
  bool any_s0 = false, any_s1 = false;
  for (const Vector& th : grid) {
    if (in_neighbourhood(part, theta_star, delta, th)) continue;
    ++rep.points;
    double diff;
    try {
      diff = model.value(th) - l_star;
    } catch (const DomainError&) {
      diff = -kInf;
    }
    double a0 = 0.0, a1 = 0.0;
    for (Index j : s0) a0 += std::abs(th[j] - ts[j]);
    for (Index j : part.s1) a1 += std::abs(th[j] - ts[j]);
    const double nd = -diff;
    if (a0 + a1 > 0.0) rep.c_common = std::min(rep.c_common, nd / (a0 + a1));
    if (a0 > 0.0) { rep.c_delta0 = std::min(rep.c_delta0, nd / a0); any_s0 = true; }
    else if (nd < 0.0) rep.c_delta0 = -kInf;
    if (a1 > 0.0) { rep.c_delta1 = std::min(rep.c_delta1, nd / a1); any_s1 = true; }
    else if (nd < 0.0) rep.c_delta1 = -kInf;
    if (given) {
      const double v = diff + given->first * a0 + given->second * a1;
      if (v > 64.0 * 2.2e-16 * (std::abs(l_star) + 1.0)) {
        ++rep.violations_given;
        rep.max_violation_given = std::max(rep.max_violation_given, v);
      }
    }
  }
  if (!any_s0) rep.c_delta0 = kNaN;
  if (!any_s1) rep.c_delta1 = kNaN;
  const double s2 = model.sigma2();
  rep.large0 = std::isfinite(rep.c_delta0) && rep.c_delta0 * delta.d0 / s2 >= 10.0;
  rep.large1 = std::isfinite(rep.c_delta1) && rep.c_delta1 * delta.d1 / s2 >= 10.0;
  return rep;
}

}  // namespace bvm
