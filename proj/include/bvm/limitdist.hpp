#pragma once

// The limit measure: a polynomially tilted, partially truncated Gaussian block
// (PTN) times independent Gamma coordinates.
//
// Throughout, the PTN coordinates are split into a free block u (the first
// p0 - p0* coordinates) and a truncated block w (the last p0*). Completing the
// square in u gives
//   (x-a)' Omega (x-a) = (u - mu(w))' Omega_uu (u - mu(w)) + (w - a_w)' S (w - a_w)
// with the Schur complement S = Omega_ww - Omega_wu Omega_uu^{-1} Omega_uw and
// mu(w) = a_u + K (w - a_w), K = -Omega_uu^{-1} Omega_uw. The free block is
// therefore integrated and sampled exactly, and only the truncated block needs
// quadrature, importance sampling or Gibbs updates.

#include "bvm/boundary.hpp"
#include "bvm/special.hpp"

#include <Eigen/Cholesky>

#include <optional>
#include <random>

namespace bvm {

class PTN {
 public:
  PTN(Vector a0, Matrix omega, Index p0_star, Vector alpha0)
      : a0_(std::move(a0)), omega_(std::move(omega)), t_(p0_star), alpha_(std::move(alpha0)) {
    const Index p = a0_.size();
    if (omega_.rows() != p || omega_.cols() != p) throw DimensionError("PTN: precision shape mismatch");
    if (t_ < 0 || t_ > p) throw DimensionError("PTN: truncated count out of range");
    require_dim(alpha_.size(), t_, "PTN tilt exponents");
    for (Index j = 0; j < t_; ++j)
      if (!(alpha_[j] > 0.0)) throw DomainError("PTN: tilt exponents must be positive");
    omega_ = 0.5 * (omega_ + omega_.transpose());
    if (p > 0) {
      Eigen::LLT<Matrix> full(omega_);
      if (full.info() != Eigen::Success) throw SingularInformationError("PTN: precision is not positive definite");
    }
    reduce();
  }

  Index p0() const { return a0_.size(); }
  Index p0_star() const { return t_; }
  Index free_dim() const { return p0() - t_; }
  const Vector& a0() const { return a0_; }
  const Matrix& omega() const { return omega_; }
  const Vector& alpha0() const { return alpha_; }
  bool untilted() const { return t_ == 0 || (alpha_.array() == 1.0).all(); }

  // Reduced truncated-block quantities.
  const Matrix& schur() const { return S_; }
  Vector trunc_mean() const { return a0_.tail(t_); }
  const Matrix& gain() const { return K_; }         // K
  const Vector& trunc_optimum() const { return w_opt_; }
  double trunc_qmin() const { return q_min_; }
  double log_free_factor() const { return log_free_; }

  // mu(w): conditional mean of the free block.
  Vector free_mean(const Vector& w) const {
    const Index f = free_dim();
    if (f == 0) return Vector(0);
    if (t_ == 0) return a0_.head(f);
    return a0_.head(f) + K_ * (w - a0_.tail(t_));
  }
  // Map standard normal z to a draw with precision Omega_uu.
  Vector free_noise(const Vector& z) const {
    if (free_dim() == 0) return Vector(0);
    return llt_uu_.matrixU().solve(z);
  }
  const Matrix& free_covariance() const { return cov_uu_; }

  double trunc_quadratic(const Vector& w) const {
    const Vector r = w - a0_.tail(t_);
    return r.dot(S_ * r);
  }

 private:
  void reduce() {
    const Index f = free_dim();
    const Matrix Ouu = omega_.topLeftCorner(f, f);
    const Matrix Ouw = omega_.topRightCorner(f, t_);
    const Matrix Oww = omega_.bottomRightCorner(t_, t_);
    log_free_ = 0.0;
    if (f > 0) {
      llt_uu_.compute(Ouu);
      const Matrix L = llt_uu_.matrixL();
      log_free_ = 0.5 * f * std::log(2.0 * kPi) - L.diagonal().array().log().sum();
      K_ = -llt_uu_.solve(Ouw);
      S_ = Oww + Ouw.transpose() * K_;
      cov_uu_ = llt_uu_.solve(Matrix::Identity(f, f));
    } else {
      K_.resize(0, t_);
      S_ = Oww;
      cov_uu_.resize(0, 0);
    }
    S_ = 0.5 * (S_ + S_.transpose());
    // Projected coordinate descent for min over w >= 0 of (w-m)' S (w-m).
    const Vector m = a0_.tail(t_);
    w_opt_ = m.cwiseMax(0.0);
    for (int sweep = 0; sweep < 5000 && t_ > 0; ++sweep) {
      double change = 0.0;
      for (Index k = 0; k < t_; ++k) {
        double acc = 0.0;
        for (Index i = 0; i < t_; ++i)
          if (i != k) acc += S_(k, i) * (w_opt_[i] - m[i]);
        const double nv = std::max(0.0, m[k] - acc / S_(k, k));
        change = std::max(change, std::abs(nv - w_opt_[k]));
        w_opt_[k] = nv;
      }
      if (change < 1e-15 * (1.0 + w_opt_.cwiseAbs().maxCoeff())) break;
    }
    q_min_ = t_ > 0 ? trunc_quadratic(w_opt_) : 0.0;
  }

  Vector a0_;
  Matrix omega_;
  Index t_;
  Vector alpha_;
  Eigen::LLT<Matrix> llt_uu_;
  Matrix K_, S_, cov_uu_;
  Vector w_opt_;
  double q_min_ = 0.0;
  double log_free_ = 0.0;
};

inline double ptn_logdensity_unnorm(const PTN& d, const Vector& x) {
  require_dim(x.size(), d.p0(), "ptn_logdensity_unnorm");
  const Index f = d.free_dim();
  double s = 0.0;
  for (Index j = 0; j < d.p0_star(); ++j) {
    const double v = x[f + j];
    if (v < 0.0) return -kInf;
    const double a = d.alpha0()[j] - 1.0;
    if (a != 0.0) s += a * std::log(v);  // log(0) = -inf gives the literal value at 0
  }
  const Vector r = x - d.a0();
  return s - 0.5 * r.dot(d.omega() * r);
}

// ---------------------------------------------------------------------------
// One-dimensional tilted integral: int_0^inf w^(alpha-1) h(w) dw where h is
// smooth and concentrated near a Gaussian window with centre c and scale d.
// A Gauss-Jacobi panel absorbs the endpoint power; adaptive Gauss-Kronrod
// covers the rest.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr double kWindowLogTail = 36.0;  // e^-36 ~ 2e-16

struct JacobiPair {
  GaussRule fine, coarse;
};

inline JacobiPair jacobi_pair(double alpha) {
  return {gauss_jacobi(40, 0.0, alpha - 1.0), gauss_jacobi(24, 0.0, alpha - 1.0)};
}

template <class H>
QuadResult integrate_tilted(double alpha, double c, double d, double anchor, double panel_width,
                            const JacobiPair& jac, H&& h, double rel_tol) {
  const double T = kWindowLogTail;
  const double ap = std::max(alpha - 1.0, 0.0);
  const double X = T + 3.0 * ap + 3.0;
  double U = c + std::sqrt(c * c + 2.0 * X * d * d);
  const double mode = 0.5 * (c + std::sqrt(c * c + 4.0 * ap * d * d));
  U = std::max(U, mode + std::sqrt(2.0 * X) * d);
  U = std::max(U, anchor + std::sqrt(2.0 * X) * d);
  double L = std::min(c, anchor) - std::sqrt(2.0 * T) * d;
  auto tilted = [&](double w) {
    const double hv = h(w);
    return alpha == 1.0 ? hv : hv * std::pow(w, alpha - 1.0);
  };
  auto panels_for = [&](double a, double b) {
    return static_cast<int>(std::min(64.0, std::max(1.0, std::ceil((b - a) / panel_width))));
  };
  QuadResult out;
  if (L > 0.0) {
    out = integrate_gk(tilted, L, U, 0.0, rel_tol, 4000, panels_for(L, U));
    return out;
  }
  double h1 = 0.5 * d * std::min(1.0, c != 0.0 ? d / std::abs(c) : 1.0);
  h1 = std::min(h1, 0.5 * panel_width);
  h1 = std::min(h1, U);
  // int_0^h1 w^(alpha-1) h(w) dw = (h1/2)^alpha sum_i W_i h(h1 (1 + x_i) / 2)
  auto jac_sum = [&](const GaussRule& r) {
    double s = 0.0;
    for (Index i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * h(0.5 * h1 * (1.0 + r.nodes[i]));
    return s * std::pow(0.5 * h1, alpha);
  };
  const double j_fine = jac_sum(jac.fine);
  const double j_coarse = jac_sum(jac.coarse);
  out = integrate_gk(tilted, h1, U, 0.0, rel_tol, 4000, panels_for(h1, U));
  out.value += j_fine;
  out.error += std::abs(j_fine - j_coarse);
  out.evaluations += jac.fine.nodes.size() + jac.coarse.nodes.size();
  return out;
}

// Nested quadrature over the truncated block for dimensions 1..3.
class TruncatedIntegrator {
 public:
  TruncatedIntegrator(const PTN& d, double rel_tol) : d_(d), rel_tol_(rel_tol) {
    const Index t = d.p0_star();
    if (t > 3) throw DomainError("PTN quadrature supports at most three truncated coordinates");
    const Matrix Sigma = d.schur().inverse();
    for (Index k = 0; k < t; ++k) {
      jac_.push_back(jacobi_pair(d.alpha0()[k]));
      const Matrix P = Sigma.topLeftCorner(k + 1, k + 1).inverse();
      prec_.push_back(P(k, k));
      coef_.push_back(P.row(k).head(k).transpose() / P(k, k));
      width_.push_back(1.0 / std::sqrt(d.schur()(k, k)));
    }
  }

  // int over R_+^t of g(w) prod w^(alpha-1) exp(-(q(w) - q_min)/2) dw
  template <class G>
  QuadResult integrate(G&& g) {
    const Index t = d_.p0_star();
    Vector w(t);
    inner_rel_ = 0.0;
    if (t == 0) return {g(w), 0.0, 1, true};
    std::function<double(Index)> level = [&](Index k) -> double {
      if (k == t) return g(w) * std::exp(-0.5 * (d_.trunc_quadratic(w) - d_.trunc_qmin()));
      const Vector m = d_.trunc_mean();
      double c = m[k];
      for (Index i = 0; i < k; ++i) c -= coef_[k][i] * (w[i] - m[i]);
      const double sd = 1.0 / std::sqrt(prec_[k]);
      const double anchor = (k + 1 == t) ? c : d_.trunc_optimum()[k];
      auto h = [&](double x) {
        w[k] = x;
        return level(k + 1);
      };
      const double tol = k == 0 ? rel_tol_ : 0.1 * rel_tol_;
      auto r = integrate_tilted(d_.alpha0()[k], c, sd, anchor, width_[k], jac_[k], h, tol);
      if (k > 0 && r.value != 0.0) inner_rel_ = std::max(inner_rel_, r.error / std::abs(r.value));
      if (!r.converged) converged_ = false;
      evaluations_ += r.evaluations;
      return k == 0 ? (last_ = r, r.value) : r.value;
    };
    converged_ = true;
    evaluations_ = 0;
    level(0);
    QuadResult out = last_;
    out.error += inner_rel_ * std::abs(out.value);
    out.converged = converged_ && out.converged;
    out.evaluations = evaluations_;
    return out;
  }

 private:
  const PTN& d_;
  double rel_tol_;
  std::vector<JacobiPair> jac_;
  std::vector<double> prec_;
  std::vector<Vector> coef_;
  std::vector<double> width_;
  double inner_rel_ = 0.0;
  bool converged_ = true;
  long evaluations_ = 0;
  QuadResult last_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// One-dimensional tilted truncated normal sampler:
//   density ∝ w^(alpha-1) exp(-(w-c)^2 / (2 d^2)) on w > 0.
// Standardised mean mu = c/d selects the envelope:
//   mu <= 1            Gamma(alpha, beta) envelope
//   mu > 1, alpha >= 1 normal envelope centred at the mode
//   mu > 1, alpha < 1  power-law piece on (0, mu/2] plus normal piece beyond
// ---------------------------------------------------------------------------

inline constexpr double kTiltedSwitch = 1.0;

template <class Rng>
double sample_tilted_normal(double alpha, double c, double d, Rng& rng) {
  if (!(alpha > 0.0 && d > 0.0)) throw DomainError("sample_tilted_normal: bad parameters");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double mu = c / d;
  constexpr long kMaxAttempts = 10000000;
  if (mu <= kTiltedSwitch) {
    const double beta = 0.5 * (-mu + std::sqrt(mu * mu + 4.0 * alpha));
    std::gamma_distribution<double> gam(alpha, 1.0 / beta);
    const double xs = std::max(0.0, mu + beta);
    auto lh = [&](double x) { return -0.5 * (x - mu) * (x - mu) + beta * x; };
    const double hmax = lh(xs);
    for (long n = 0; n < kMaxAttempts; ++n) {
      const double x = gam(rng);
      if (!(x > 0.0)) continue;
      if (std::log(unif(rng)) < lh(x) - hmax) return d * x;
    }
  } else if (alpha >= 1.0) {
    const double xm = 0.5 * (mu + std::sqrt(mu * mu + 4.0 * (alpha - 1.0)));
    auto r = [&](double x) { return (alpha - 1.0) * std::log(x) + (mu - xm) * x; };
    const double rmax = alpha == 1.0 ? 0.0 : r(xm);
    for (long n = 0; n < kMaxAttempts; ++n) {
      const double x = xm + normal(rng);
      if (!(x > 0.0)) continue;
      if (alpha == 1.0 || std::log(unif(rng)) < r(x) - rmax) return d * x;
    }
  } else {
    const double x0 = 0.5 * mu;
    const double log_e1 = alpha * std::log(x0) - std::log(alpha) - 0.5 * (x0 - mu) * (x0 - mu);
    const double log_e2 = (alpha - 1.0) * std::log(x0) + 0.5 * std::log(2.0 * kPi) + std::log(normal_cdf(mu - x0));
    const double p1 = 1.0 / (1.0 + std::exp(log_e2 - log_e1));
    for (long n = 0; n < kMaxAttempts; ++n) {
      if (unif(rng) < p1) {
        const double x = x0 * std::pow(unif(rng), 1.0 / alpha);
        if (!(x > 0.0)) continue;
        if (std::log(unif(rng)) < -0.5 * (x - mu) * (x - mu) + 0.5 * (x0 - mu) * (x0 - mu)) return d * x;
      } else {
        const double x = mu + normal(rng);
        if (!(x > x0)) continue;
        if (std::log(unif(rng)) < (alpha - 1.0) * (std::log(x) - std::log(x0))) return d * x;
      }
    }
  }
  throw ParameterRegimeError("sample_tilted_normal: rejection sampler stalled (acceptance below 1e-7)");
}

// ---------------------------------------------------------------------------
// Normalizer
// ---------------------------------------------------------------------------

enum class NormalizerMethod { Auto, Quadrature, MonteCarlo, None };

struct NormalizerResult {
  double log_value = 0.0;
  double rel_error = 0.0;  // quadrature error estimate or MC standard error, relative
  NormalizerMethod method = NormalizerMethod::Quadrature;
  double value() const { return std::exp(log_value); }
};

struct MonteCarloOptions {
  std::size_t draws = 100000;
  std::uint64_t seed = 0x5eed;
};

namespace detail {

// Marginal moments of a 1-D tilted truncated normal, by quadrature.
inline std::pair<double, double> tilted_moments_1d(double alpha, double c, double d) {
  const JacobiPair jac = jacobi_pair(alpha);
  const double shift = c > 0.0 ? 0.0 : c * c / (2.0 * d * d);
  auto base = [&](double w) { return std::exp(-(w - c) * (w - c) / (2.0 * d * d) + shift); };
  const double m0 = integrate_tilted(alpha, c, d, c, d, jac, base, 1e-10).value;
  const double m1 = integrate_tilted(alpha, c, d, c, d, jac, [&](double w) { return w * base(w); }, 1e-10).value;
  const double m2 = integrate_tilted(alpha, c, d, c, d, jac, [&](double w) { return w * w * base(w); }, 1e-10).value;
  const double mean = m1 / m0;
  return {mean, std::max(m2 / m0 - mean * mean, 1e-300)};
}

}  // namespace detail

inline NormalizerResult ptn_normalizer_quadrature(const PTN& d, double rel_tol = 1e-10) {
  NormalizerResult res;
  res.method = NormalizerMethod::Quadrature;
  if (d.p0_star() == 0) {
    res.log_value = d.log_free_factor();
    return res;
  }
  detail::TruncatedIntegrator integ(d, rel_tol);
  const auto q = integ.integrate([](const Vector&) { return 1.0; });
  if (!q.converged || !(q.value > 0.0))
    throw NonConvergenceError("ptn_normalizer: adaptive quadrature did not converge");
  res.log_value = d.log_free_factor() + std::log(q.value) - 0.5 * d.trunc_qmin();
  res.rel_error = q.error / q.value;
  return res;
}

inline NormalizerResult ptn_normalizer_mc(const PTN& d, MonteCarloOptions opt = {}) {
  NormalizerResult res;
  res.method = NormalizerMethod::MonteCarlo;
  const Index t = d.p0_star();
  if (t == 0) {
    res.log_value = d.log_free_factor();
    return res;
  }
  std::mt19937_64 rng(opt.seed);
  const Vector m = d.trunc_mean();
  const Matrix& S = d.schur();
  const auto N = static_cast<double>(opt.draws);
  double sum = 0.0, sum2 = 0.0, log_scale = 0.0;
  if (d.untilted()) {
    // GHK: sequential truncated standard normals under Sigma = S^{-1} = L L'.
    const Matrix Sigma = S.inverse();
    Eigen::LLT<Matrix> llt(Sigma);
    const Matrix L = llt.matrixL();
    Vector eta(t);
    for (std::size_t n = 0; n < opt.draws; ++n) {
      double logw = 0.0;
      for (Index k = 0; k < t; ++k) {
        double acc = m[k];
        for (Index i = 0; i < k; ++i) acc += L(k, i) * eta[i];
        const double lower = -acc / L(k, k);
        logw += log_normal_sf(lower);
        eta[k] = lower + sample_tilted_normal(1.0, -lower, 1.0, rng);
      }
      const double w = std::exp(logw);
      sum += w;
      sum2 += w * w;
    }
    Eigen::LLT<Matrix> lls(S);
    const Matrix Ls = lls.matrixL();
    log_scale = 0.5 * t * std::log(2.0 * kPi) - Ls.diagonal().array().log().sum();
  } else {
    // Importance sampling from a product of defensive two-component Gamma mixtures.
    const Matrix Sigma = S.inverse();
    std::vector<double> r1(t), k2(t), r2(t);
    for (Index j = 0; j < t; ++j) {
      const auto [mean, var] = detail::tilted_moments_1d(d.alpha0()[j], m[j], std::sqrt(Sigma(j, j)));
      r1[j] = d.alpha0()[j] / mean;
      k2[j] = std::max(d.alpha0()[j], mean * mean / var);
      r2[j] = k2[j] / mean;
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto log_gamma_pdf = [](double x, double k, double r) {
      return k * std::log(r) - std::lgamma(k) + (k - 1.0) * std::log(x) - r * x;
    };
    Vector w(t);
    for (std::size_t n = 0; n < opt.draws; ++n) {
      double logq = 0.0, tilt = 0.0;
      bool ok = true;
      for (Index j = 0; j < t; ++j) {
        const double a = d.alpha0()[j];
        double x;
        if (unif(rng) < 0.5) x = std::gamma_distribution<double>(a, 1.0 / r1[j])(rng);
        else x = std::gamma_distribution<double>(k2[j], 1.0 / r2[j])(rng);
        if (!(x > 0.0)) { ok = false; break; }
        w[j] = x;
        logq += std::log(0.5) + log_add(log_gamma_pdf(x, a, r1[j]), log_gamma_pdf(x, k2[j], r2[j]));
        tilt += (a - 1.0) * std::log(x);
      }
      const double v = ok ? std::exp(tilt - 0.5 * (d.trunc_quadratic(w) - d.trunc_qmin()) - logq) : 0.0;
      sum += v;
      sum2 += v * v;
    }
    log_scale = -0.5 * d.trunc_qmin();
  }
  const double mean = sum / N;
  const double var = std::max(sum2 / N - mean * mean, 0.0);
  if (!(mean > 0.0)) throw NumericalError("ptn_normalizer: Monte Carlo estimate is zero");
  res.log_value = d.log_free_factor() + log_scale + std::log(mean);
  res.rel_error = std::sqrt(var / N) / mean;
  return res;
}

inline NormalizerResult ptn_normalizer(const PTN& d, NormalizerMethod method = NormalizerMethod::Auto,
                                       MonteCarloOptions mc = {}) {
  switch (method) {
    case NormalizerMethod::Quadrature: return ptn_normalizer_quadrature(d);
    case NormalizerMethod::MonteCarlo: return ptn_normalizer_mc(d, mc);
    case NormalizerMethod::Auto:
      return d.p0_star() <= 3 ? ptn_normalizer_quadrature(d) : ptn_normalizer_mc(d, mc);
    case NormalizerMethod::None: break;
  }
  throw DomainError("ptn_normalizer: no method selected");
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

struct SamplerOptions {
  int burn_in_sweeps = 100;
  // Restart the Gibbs stage for every draw (independent draws). When false a
  // single chain is run and every `thin`-th sweep is kept.
  bool independent = true;
  int thin = 5;
};

// k x p0 matrix of draws.
template <class Rng>
Matrix ptn_sample(const PTN& d, Rng& rng, Index k, SamplerOptions opt = {}) {
  if (k < 1) throw DomainError("ptn_sample: need k >= 1");
  const Index t = d.p0_star(), f = d.free_dim();
  Matrix out(k, d.p0());
  std::normal_distribution<double> normal(0.0, 1.0);
  const Vector m = d.trunc_mean();
  const Matrix& S = d.schur();
  Vector w(t);

  auto gibbs_sweep = [&]() {
    for (Index j = 0; j < t; ++j) {
      double acc = 0.0;
      for (Index i = 0; i < t; ++i)
        if (i != j) acc += S(j, i) * (w[i] - m[i]);
      const double c = m[j] - acc / S(j, j);
      w[j] = sample_tilted_normal(d.alpha0()[j], c, 1.0 / std::sqrt(S(j, j)), rng);
    }
  };
  auto start = [&]() {
    w = d.trunc_optimum();
    for (int s = 0; s < opt.burn_in_sweeps; ++s) gibbs_sweep();
  };
  if (t >= 2 && !opt.independent) start();
  Vector z(f);
  for (Index n = 0; n < k; ++n) {
    if (t == 1) {
      w[0] = sample_tilted_normal(d.alpha0()[0], m[0], 1.0 / std::sqrt(S(0, 0)), rng);
    } else if (t >= 2) {
      if (opt.independent) start();
      else for (int s = 0; s < opt.thin; ++s) gibbs_sweep();
    }
    if (f > 0) {
      for (Index i = 0; i < f; ++i) z[i] = normal(rng);
      out.row(n).head(f) = (d.free_mean(w) + d.free_noise(z)).transpose();
    }
    if (t > 0) out.row(n).tail(t) = w.transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

struct PtnMoments {
  Vector mean;
  Matrix second;  // E[x x']
};

inline PtnMoments ptn_moments_quadrature(const PTN& d, double rel_tol = 1e-10) {
  const Index t = d.p0_star(), f = d.free_dim();
  Vector Ew = Vector::Zero(t);
  Matrix Eww = Matrix::Zero(t, t);
  if (t > 0) {
    detail::TruncatedIntegrator integ(d, rel_tol);
    const double z = integ.integrate([](const Vector&) { return 1.0; }).value;
    for (Index i = 0; i < t; ++i) {
      Ew[i] = integ.integrate([i](const Vector& w) { return w[i]; }).value / z;
      for (Index j = i; j < t; ++j) {
        Eww(i, j) = Eww(j, i) = integ.integrate([i, j](const Vector& w) { return w[i] * w[j]; }).value / z;
      }
    }
  }
  PtnMoments mo;
  mo.mean.resize(d.p0());
  mo.second.resize(d.p0(), d.p0());
  if (f > 0) {
    const Vector b = t > 0 ? Vector(d.a0().head(f) - d.gain() * d.a0().tail(t)) : Vector(d.a0().head(f));
    const Matrix& K = d.gain();
    const Vector Eu = t > 0 ? Vector(b + K * Ew) : b;
    Matrix Euu = d.free_covariance() + b * b.transpose();
    if (t > 0) {
      Euu += K * Ew * b.transpose() + b * Ew.transpose() * K.transpose() + K * Eww * K.transpose();
      const Matrix Euw = b * Ew.transpose() + K * Eww;
      mo.second.topRightCorner(f, t) = Euw;
      mo.second.bottomLeftCorner(t, f) = Euw.transpose();
    }
    mo.mean.head(f) = Eu;
    mo.second.topLeftCorner(f, f) = Euu;
  }
  if (t > 0) {
    mo.mean.tail(t) = Ew;
    mo.second.bottomRightCorner(t, t) = Eww;
  }
  return mo;
}

template <class Rng>
PtnMoments ptn_moments_mc(const PTN& d, Rng& rng, Index k) {
  const Matrix X = ptn_sample(d, rng, k);
  PtnMoments mo;
  mo.mean = X.colwise().mean().transpose();
  mo.second = X.transpose() * X / static_cast<double>(k);
  return mo;
}

// ---------------------------------------------------------------------------
// Limit measure: PTN x prod_j Gamma(alpha1_j, rate a1_j)
// ---------------------------------------------------------------------------

inline double gamma_log_pdf(double v, double shape, double rate) {
  if (v < 0.0) return -kInf;
  if (v == 0.0) {
    if (shape < 1.0) return kInf;
    if (shape == 1.0) return std::log(rate);
    return -kInf;
  }
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(v) - rate * v;
}

class LimitMeasure {
 public:
  LimitMeasure(PTN ptn, Vector shapes, Vector rates, NormalizerMethod method = NormalizerMethod::Auto,
               MonteCarloOptions mc = {})
      : ptn_(std::move(ptn)), shapes_(std::move(shapes)), rates_(std::move(rates)) {
    require_dim(rates_.size(), shapes_.size(), "LimitMeasure Gamma block");
    for (Index j = 0; j < shapes_.size(); ++j)
      if (!(shapes_[j] > 0.0 && rates_[j] > 0.0))
        throw DomainError("LimitMeasure: Gamma shapes and rates must be positive");
    if (method != NormalizerMethod::None) normalizer_ = ptn_normalizer(ptn_, method, mc);
  }

  const PTN& ptn() const { return ptn_; }
  const Vector& shapes() const { return shapes_; }
  const Vector& rates() const { return rates_; }
  Index p0() const { return ptn_.p0(); }
  Index p1() const { return shapes_.size(); }
  Index dimension() const { return p0() + p1(); }
  bool has_normalizer() const { return normalizer_.has_value(); }
  const NormalizerResult& normalizer() const {
    if (!normalizer_) throw DomainError("LimitMeasure: normalizer was not computed");
    return *normalizer_;
  }

 private:
  PTN ptn_;
  Vector shapes_, rates_;
  std::optional<NormalizerResult> normalizer_;
};

inline LimitMeasure make_limit_measure(const LocalQuadratic& lq, const BoundaryPartition& part,
                                       NormalizerMethod method = NormalizerMethod::Auto) {
  return LimitMeasure(PTN(lq.a0, lq.omega, part.p0_star(), lq.alpha0), lq.alpha1, lq.a1, method);
}

inline double limit_logdensity(const LimitMeasure& mu, const Vector& v) {
  require_dim(v.size(), mu.dimension(), "limit_logdensity");
  double s = 0.0;
  if (mu.p0() > 0) s += ptn_logdensity_unnorm(mu.ptn(), v.head(mu.p0())) - mu.normalizer().log_value;
  for (Index j = 0; j < mu.p1(); ++j) s += gamma_log_pdf(v[mu.p0() + j], mu.shapes()[j], mu.rates()[j]);
  return s;
}

template <class Rng>
Matrix limit_sample(const LimitMeasure& mu, Rng& rng, Index k, SamplerOptions opt = {}) {
  if (k < 1) throw DomainError("limit_sample: need k >= 1");
  Matrix out(k, mu.dimension());
  if (mu.p0() > 0) out.leftCols(mu.p0()) = ptn_sample(mu.ptn(), rng, k, opt);
  for (Index j = 0; j < mu.p1(); ++j) {
    std::gamma_distribution<double> g(mu.shapes()[j], 1.0 / mu.rates()[j]);
    for (Index n = 0; n < k; ++n) out(n, mu.p0() + j) = g(rng);
  }
  return out;
}

}  // namespace bvm
