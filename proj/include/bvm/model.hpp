#pragma once

// Scaled log-likelihoods l_y(theta) = sigma^2 log p(y | theta), their
// deterministic limits, and prior log-densities.
//
// Additive constants that do not depend on theta are dropped once per family,
// so only differences l_y(theta) - l_y(theta') carry meaning.

#include "bvm/core.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <utility>

namespace bvm {

enum class Family { PoissonGLM, Binomial, MixedEffects, Custom };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::PoissonGLM: return "poisson_glm";
    case Family::Binomial: return "binomial";
    case Family::MixedEffects: return "mixed_effects";
    case Family::Custom: return "custom";
  }
  return "unknown";
}

class ScaledLikelihood {
 public:
  virtual ~ScaledLikelihood() = default;

  virtual Family family() const = 0;
  virtual Index dimension() const = 0;
  virtual double sigma() const = 0;

  virtual double value(const Vector& theta) const = 0;
  virtual Vector gradient(const Vector& theta) const = 0;
  virtual Matrix hessian(const Vector& theta) const = 0;

  virtual bool has_limit() const { return false; }
  virtual double limit_value(const Vector&, const Vector&) const {
    throw UnsupportedError(std::string("no closed-form limit for family ") + family_name(family()));
  }
  virtual Vector limit_gradient(const Vector&, const Vector&) const {
    throw UnsupportedError(std::string("no closed-form limit for family ") + family_name(family()));
  }
  virtual Matrix limit_hessian(const Vector&, const Vector&) const {
    throw UnsupportedError(std::string("no closed-form limit for family ") + family_name(family()));
  }

  double sigma2() const { return sigma() * sigma(); }
};

using LikelihoodPtr = std::shared_ptr<const ScaledLikelihood>;

// ---------------------------------------------------------------------------
// Poisson GLM: Y_i / sigma^2 ~ Poisson(A_i theta / sigma^2), y = rates.
// ---------------------------------------------------------------------------

class PoissonGLM final : public ScaledLikelihood {
 public:
  PoissonGLM(SparseMatrix A, Vector y, double sigma) : A_(std::move(A)), y_(std::move(y)), sigma_(sigma) {
    require_dim(y_.size(), A_.rows(), "PoissonGLM data");
    if (!(sigma_ > 0.0)) throw DomainError("PoissonGLM: sigma must be positive");
    for (Index k = 0; k < A_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(A_, k); it; ++it)
        if (it.value() < 0.0) throw DomainError("PoissonGLM: design matrix must be nonnegative");
    for (Index i = 0; i < y_.size(); ++i)
      if (!(y_[i] >= 0.0)) throw DomainError("PoissonGLM: data must be nonnegative");
    A_.makeCompressed();
  }
  PoissonGLM(const Matrix& A, Vector y, double sigma)
      : PoissonGLM(SparseMatrix(A.sparseView()), std::move(y), sigma) {}

  Family family() const override { return Family::PoissonGLM; }
  Index dimension() const override { return A_.cols(); }
  double sigma() const override { return sigma_; }
  const SparseMatrix& design() const { return A_; }
  const Vector& data() const { return y_; }

  // Mean vector A theta; exposed because several callers need it.
  Vector mean(const Vector& theta) const {
    require_dim(theta.size(), dimension(), "PoissonGLM parameter");
    return A_ * theta;
  }

  static double loglik_for(const Vector& y, const Vector& mu) {
    double s = 0.0;
    for (Index i = 0; i < y.size(); ++i) {
      if (y[i] > 0.0) {
        if (!(mu[i] > 0.0))
          throw DomainError("Poisson: mean A_i theta is zero for row " + std::to_string(i) +
                            " with positive data");
        s += y[i] * std::log(mu[i]) - mu[i];
      } else {
        s -= mu[i];  // degenerate cell: y log mu -> 0
      }
    }
    return s;
  }

  double value(const Vector& theta) const override { return loglik_for(y_, mean(theta)); }
  Vector gradient(const Vector& theta) const override { return gradient_for(y_, theta); }
  Matrix hessian(const Vector& theta) const override { return hessian_for(y_, theta); }

  bool has_limit() const override { return true; }
  double limit_value(const Vector& theta, const Vector& theta_star) const override {
    return loglik_for(mean(theta_star), mean(theta));
  }
  Vector limit_gradient(const Vector& theta, const Vector& theta_star) const override {
    return gradient_for(mean(theta_star), theta);
  }
  Matrix limit_hessian(const Vector& theta, const Vector& theta_star) const override {
    return hessian_for(mean(theta_star), theta);
  }

  // Variant of value() that maps the log-of-zero domain failure to -inf.
  double value_or_neg_inf(const Vector& theta) const {
    const Vector mu = mean(theta);
    double s = 0.0;
    for (Index i = 0; i < y_.size(); ++i) {
      if (y_[i] > 0.0) {
        if (!(mu[i] > 0.0)) return -kInf;
        s += y_[i] * std::log(mu[i]) - mu[i];
      } else {
        s -= mu[i];
      }
    }
    return s;
  }

 private:
  Vector gradient_for(const Vector& y, const Vector& theta) const {
    const Vector mu = mean(theta);
    Vector w(y.size());
    for (Index i = 0; i < y.size(); ++i) {
      if (y[i] > 0.0) {
        if (!(mu[i] > 0.0)) throw DomainError("Poisson gradient: zero mean with positive data");
        w[i] = y[i] / mu[i] - 1.0;
      } else {
        w[i] = -1.0;
      }
    }
    return A_.transpose() * w;
  }
  Matrix hessian_for(const Vector& y, const Vector& theta) const {
    const Vector mu = mean(theta);
    Vector w = Vector::Zero(y.size());
    for (Index i = 0; i < y.size(); ++i) {
      if (y[i] > 0.0) {
        if (!(mu[i] > 0.0)) throw DomainError("Poisson Hessian: zero mean with positive data");
        w[i] = y[i] / (mu[i] * mu[i]);
      }
    }
    const SparseMatrix WA = w.asDiagonal() * A_;
    return -Matrix(A_.transpose() * WA);
  }

  SparseMatrix A_;
  Vector y_;
  double sigma_;
};

// ---------------------------------------------------------------------------
// Independent binomials Y_i ~ Bin(n_i, theta_i); sigma^2 = 1/sum(n_i).
// ---------------------------------------------------------------------------

class Binomial final : public ScaledLikelihood {
 public:
  Binomial(Vector successes, Vector trials) : y_(std::move(successes)), n_(std::move(trials)) {
    require_dim(y_.size(), n_.size(), "Binomial data");
    for (Index i = 0; i < n_.size(); ++i) {
      if (!(n_[i] > 0.0) || !(y_[i] >= 0.0) || y_[i] > n_[i])
        throw DomainError("Binomial: need 0 <= y_i <= n_i and n_i > 0");
    }
    total_ = n_.sum();
  }

  Family family() const override { return Family::Binomial; }
  Index dimension() const override { return n_.size(); }
  double sigma() const override { return 1.0 / std::sqrt(total_); }
  Vector weights() const { return n_ / total_; }
  const Vector& successes() const { return y_; }
  const Vector& trials() const { return n_; }

  double value(const Vector& theta) const override {
    check(theta);
    double s = 0.0;
    for (Index i = 0; i < y_.size(); ++i) s += term(y_[i], n_[i] - y_[i], theta[i]);
    return s / total_;
  }
  Vector gradient(const Vector& theta) const override {
    check(theta);
    Vector g(dimension());
    for (Index i = 0; i < g.size(); ++i) g[i] = dterm(y_[i], n_[i] - y_[i], theta[i]) / total_;
    return g;
  }
  Matrix hessian(const Vector& theta) const override {
    check(theta);
    Matrix h = Matrix::Zero(dimension(), dimension());
    for (Index i = 0; i < h.rows(); ++i) h(i, i) = d2term(y_[i], n_[i] - y_[i], theta[i]) / total_;
    return h;
  }

  // l*(theta) = sum_i w_i [theta*_i log theta_i + (1 - theta*_i) log(1 - theta_i)]
  bool has_limit() const override { return true; }
  double limit_value(const Vector& theta, const Vector& ts) const override {
    check(theta);
    const Vector w = weights();
    double s = 0.0;
    for (Index i = 0; i < w.size(); ++i) s += w[i] * term(ts[i], 1.0 - ts[i], theta[i]);
    return s;
  }
  Vector limit_gradient(const Vector& theta, const Vector& ts) const override {
    check(theta);
    const Vector w = weights();
    Vector g(w.size());
    for (Index i = 0; i < w.size(); ++i) g[i] = w[i] * dterm(ts[i], 1.0 - ts[i], theta[i]);
    return g;
  }
  Matrix limit_hessian(const Vector& theta, const Vector& ts) const override {
    check(theta);
    const Vector w = weights();
    Matrix h = Matrix::Zero(w.size(), w.size());
    for (Index i = 0; i < w.size(); ++i) h(i, i) = w[i] * d2term(ts[i], 1.0 - ts[i], theta[i]);
    return h;
  }

 private:
  void check(const Vector& theta) const {
    require_dim(theta.size(), dimension(), "Binomial parameter");
    for (Index i = 0; i < theta.size(); ++i)
      if (!(theta[i] >= 0.0 && theta[i] <= 1.0)) throw DomainError("Binomial: theta outside [0,1]");
  }
  // s log t + f log(1 - t), with 0 log 0 = 0.
  static double term(double s, double f, double t) {
    double v = 0.0;
    if (s > 0.0) {
      if (t <= 0.0) throw DomainError("Binomial: theta_i = 0 with successes");
      v += s * std::log(t);
    }
    if (f > 0.0) {
      if (t >= 1.0) throw DomainError("Binomial: theta_i = 1 with failures");
      v += f * std::log1p(-t);
    }
    return v;
  }
  static double dterm(double s, double f, double t) {
    double v = 0.0;
    if (s > 0.0) {
      if (t <= 0.0) throw DomainError("Binomial gradient: theta_i = 0 with successes");
      v += s / t;
    }
    if (f > 0.0) {
      if (t >= 1.0) throw DomainError("Binomial gradient: theta_i = 1 with failures");
      v -= f / (1.0 - t);
    }
    return v;
  }
  static double d2term(double s, double f, double t) {
    double v = 0.0;
    if (s > 0.0) {
      if (t <= 0.0) throw DomainError("Binomial Hessian: theta_i = 0 with successes");
      v -= s / (t * t);
    }
    if (f > 0.0) {
      if (t >= 1.0) throw DomainError("Binomial Hessian: theta_i = 1 with failures");
      v -= f / ((1.0 - t) * (1.0 - t));
    }
    return v;
  }

  Vector y_, n_;
  double total_;
};

// ---------------------------------------------------------------------------
// One-way Gaussian random effects with k classes of m observations:
// Ybar_i ~ N(mu, tau^2 (theta + 1/m)), within-class SS_i ~ tau^2 chi2_{m-1}.
// Joint parameter order (mu, tau^2, theta); mu is taken nonnegative.
// ---------------------------------------------------------------------------

class MixedEffects final : public ScaledLikelihood {
 public:
  // Summary statistics per class. `class_ss` may be empty in known-variance mode.
  struct Data {
    Vector class_means;
    Vector class_ss;
    int m = 2;
  };

  // Joint likelihood in (mu, tau^2, theta).
  static MixedEffects joint(const Data& d) { return MixedEffects(d, false, 0.0, 1.0); }
  // Variance component theta only, with mu and tau known.
  static MixedEffects known_location_scale(const Data& d, double mu, double tau) {
    return MixedEffects(d, true, mu, tau);
  }

  Family family() const override { return Family::MixedEffects; }
  Index dimension() const override { return known_ ? 1 : 3; }
  double sigma() const override { return 1.0 / std::sqrt(static_cast<double>(k_)); }
  int group_size() const { return m_; }
  bool known_location_scale_mode() const { return known_; }

  double value(const Vector& th) const override { return eval(th, empirical(th)).v; }
  Vector gradient(const Vector& th) const override { return eval(th, empirical(th)).g; }
  Matrix hessian(const Vector& th) const override { return eval(th, empirical(th)).h; }

  bool has_limit() const override { return true; }
  double limit_value(const Vector& th, const Vector& ts) const override { return eval(th, limiting(th, ts)).v; }
  Vector limit_gradient(const Vector& th, const Vector& ts) const override {
    return eval(th, limiting(th, ts)).g;
  }
  Matrix limit_hessian(const Vector& th, const Vector& ts) const override {
    return eval(th, limiting(th, ts)).h;
  }

 private:
  MixedEffects(const Data& d, bool known, double mu0, double tau0)
      : known_(known), mu0_(mu0), tau0_sq_(tau0 * tau0), m_(d.m) {
    k_ = d.class_means.size();
    if (k_ < 1) throw DomainError("MixedEffects: need at least one class");
    if (m_ < 2) throw DomainError("MixedEffects: need m >= 2 observations per class");
    if (!known && d.class_ss.size() != k_) throw DimensionError("MixedEffects: class_ss size mismatch");
    if (!(tau0 > 0.0)) throw DomainError("MixedEffects: tau must be positive");
    mean_ = d.class_means.mean();
    between_ = (d.class_means.array() - mean_).square().mean();
    ss_ = known ? 0.0 : d.class_ss.mean();
  }

  // Averages over classes of SS_i, r_i = Ybar_i - mu and r_i^2.
  struct Moments {
    double ss, r, r2;
  };
  struct Eval {
    double v;
    Vector g;
    Matrix h;
  };

  Moments empirical(const Vector& th) const {
    require_dim(th.size(), dimension(), "MixedEffects parameter");
    const double mu = known_ ? mu0_ : th[0];
    const double dm = mean_ - mu;
    return {ss_, dm, between_ + dm * dm};
  }
  Moments limiting(const Vector& th, const Vector& ts) const {
    require_dim(th.size(), dimension(), "MixedEffects parameter");
    require_dim(ts.size(), dimension(), "MixedEffects true parameter");
    if (known_) return {0.0, 0.0, tau0_sq_ * (ts[0] + 1.0 / m_)};
    const double tstar2 = ts[1];
    const double dm = ts[0] - th[0];
    return {(m_ - 1) * tstar2, dm, dm * dm + tstar2 * (ts[2] + 1.0 / m_)};
  }

  Eval eval(const Vector& th, const Moments& mo) const {
    for (Index j = 0; j < th.size(); ++j)
      if (!(th[j] >= 0.0)) throw DomainError("MixedEffects: negative parameter");
    const double m = m_;
    if (known_) {
      const double t = th[0] + 1.0 / m;
      const double q = mo.r2 / tau0_sq_;
      Eval e{-0.5 * std::log(t) - q / (2.0 * t), Vector(1), Matrix(1, 1)};
      e.g[0] = -1.0 / (2.0 * t) + q / (2.0 * t * t);
      e.h(0, 0) = 1.0 / (2.0 * t * t) - q / (t * t * t);
      return e;
    }
    const double s = th[1];
    if (!(s > 0.0)) throw DomainError("MixedEffects: tau^2 must be positive");
    const double t = th[2] + 1.0 / m;
    const double r = mo.r, r2 = mo.r2, ss = mo.ss;
    Eval e{0.0, Vector(3), Matrix(3, 3)};
    e.v = -0.5 * m * std::log(s) - ss / (2.0 * s) - 0.5 * std::log(t) - r2 / (2.0 * s * t);
    e.g[0] = r / (s * t);
    e.g[1] = -m / (2.0 * s) + ss / (2.0 * s * s) + r2 / (2.0 * s * s * t);
    e.g[2] = -1.0 / (2.0 * t) + r2 / (2.0 * s * t * t);
    e.h(0, 0) = -1.0 / (s * t);
    e.h(0, 1) = e.h(1, 0) = -r / (s * s * t);
    e.h(0, 2) = e.h(2, 0) = -r / (s * t * t);
    e.h(1, 1) = m / (2.0 * s * s) - ss / (s * s * s) - r2 / (s * s * s * t);
    e.h(1, 2) = e.h(2, 1) = -r2 / (2.0 * s * s * t * t);
    e.h(2, 2) = 1.0 / (2.0 * t * t) - r2 / (s * t * t * t);
    return e;
  }

  bool known_;
  double mu0_, tau0_sq_;
  int m_;
  Index k_ = 0;
  double mean_ = 0.0, between_ = 0.0, ss_ = 0.0;
};

// ---------------------------------------------------------------------------
// User-supplied evaluators.
// ---------------------------------------------------------------------------

class CustomLikelihood final : public ScaledLikelihood {
 public:
  using ValueFn = std::function<double(const Vector&)>;
  using GradFn = std::function<Vector(const Vector&)>;
  using HessFn = std::function<Matrix(const Vector&)>;
  using LimitValueFn = std::function<double(const Vector&, const Vector&)>;
  using LimitGradFn = std::function<Vector(const Vector&, const Vector&)>;
  using LimitHessFn = std::function<Matrix(const Vector&, const Vector&)>;

  struct Limit {
    LimitValueFn value;
    LimitGradFn gradient;
    LimitHessFn hessian;
  };

  CustomLikelihood(Index p, double sigma, ValueFn v, GradFn g, HessFn h, std::optional<Limit> lim = {})
      : p_(p), sigma_(sigma), v_(std::move(v)), g_(std::move(g)), h_(std::move(h)), lim_(std::move(lim)) {
    if (!(sigma_ > 0.0)) throw DomainError("CustomLikelihood: sigma must be positive");
  }

  Family family() const override { return Family::Custom; }
  Index dimension() const override { return p_; }
  double sigma() const override { return sigma_; }
  double value(const Vector& th) const override { return v_(checked(th)); }
  Vector gradient(const Vector& th) const override { return g_(checked(th)); }
  Matrix hessian(const Vector& th) const override { return h_(checked(th)); }
  bool has_limit() const override { return lim_.has_value(); }
  double limit_value(const Vector& th, const Vector& ts) const override {
    if (!lim_) return ScaledLikelihood::limit_value(th, ts);
    return lim_->value(checked(th), ts);
  }
  Vector limit_gradient(const Vector& th, const Vector& ts) const override {
    if (!lim_) return ScaledLikelihood::limit_gradient(th, ts);
    return lim_->gradient(checked(th), ts);
  }
  Matrix limit_hessian(const Vector& th, const Vector& ts) const override {
    if (!lim_) return ScaledLikelihood::limit_hessian(th, ts);
    return lim_->hessian(checked(th), ts);
  }

 private:
  const Vector& checked(const Vector& th) const {
    require_dim(th.size(), p_, "CustomLikelihood parameter");
    return th;
  }
  Index p_;
  double sigma_;
  ValueFn v_;
  GradFn g_;
  HessFn h_;
  std::optional<Limit> lim_;
};

// ---------------------------------------------------------------------------
// Free-function surface.
// ---------------------------------------------------------------------------

inline double eval_scaled_loglik(const ScaledLikelihood& m, const ParameterPoint& th) {
  require_dim(th.dimension(), m.dimension(), "eval_scaled_loglik");
  return m.value(th.values());
}
inline Vector eval_gradient(const ScaledLikelihood& m, const ParameterPoint& th) {
  require_dim(th.dimension(), m.dimension(), "eval_gradient");
  return m.gradient(th.values());
}
inline Matrix eval_hessian(const ScaledLikelihood& m, const ParameterPoint& th) {
  require_dim(th.dimension(), m.dimension(), "eval_hessian");
  return m.hessian(th.values());
}
inline double eval_limit_loglik(const ScaledLikelihood& m, const ParameterPoint& th,
                                const ParameterPoint& ts) {
  require_dim(th.dimension(), m.dimension(), "eval_limit_loglik");
  require_dim(ts.dimension(), m.dimension(), "eval_limit_loglik (true parameter)");
  return m.limit_value(th.values(), ts.values());
}

// ---------------------------------------------------------------------------
// Priors.
// ---------------------------------------------------------------------------

enum class PriorKind { PowerLaw, LogCoshMRF, BetaConjugate, GammaConjugate };

inline const char* prior_name(PriorKind k) {
  switch (k) {
    case PriorKind::PowerLaw: return "power_law";
    case PriorKind::LogCoshMRF: return "logcosh_mrf";
    case PriorKind::BetaConjugate: return "beta";
    case PriorKind::GammaConjugate: return "gamma";
  }
  return "unknown";
}

using EdgeList = std::vector<std::pair<Index, Index>>;

// log cosh(x), stable for large |x|.
inline double log_cosh(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

// Densities are unnormalized; log_density returns -inf where the density is 0.
class PriorSpec {
 public:
  static PriorSpec power_law(Vector alpha) { return PriorSpec(PriorKind::PowerLaw, std::move(alpha)); }
  static PriorSpec flat(Index p) { return power_law(Vector::Ones(p)); }
  // p(theta) ∝ theta^(alpha-1) (1-theta)^(beta-1), coordinatewise.
  static PriorSpec beta(Vector alpha, Vector beta) {
    PriorSpec s(PriorKind::BetaConjugate, std::move(alpha));
    require_dim(beta.size(), s.alpha_.size(), "beta prior second shape");
    s.second_ = std::move(beta);
    return s;
  }
  // p(theta) ∝ theta^(alpha-1) exp(-b theta), coordinatewise.
  static PriorSpec gamma(Vector alpha, Vector rate) {
    PriorSpec s(PriorKind::GammaConjugate, std::move(alpha));
    require_dim(rate.size(), s.alpha_.size(), "gamma prior rate");
    s.second_ = std::move(rate);
    return s;
  }
  // log p = -zeta(1+zeta)/(2 gamma^2) sum_{j~k} log cosh((theta_j - theta_k)/zeta)
  static PriorSpec log_cosh_mrf(Index p, double gamma, double zeta, EdgeList edges) {
    if (!(gamma > 0.0 && zeta > 0.0)) throw DomainError("log cosh prior: gamma and zeta must be positive");
    PriorSpec s(PriorKind::LogCoshMRF, Vector::Ones(p));
    s.gamma_ = gamma;
    s.zeta_ = zeta;
    for (auto [a, b] : edges)
      if (a < 0 || b < 0 || a >= p || b >= p || a == b) throw DomainError("log cosh prior: bad edge");
    s.edges_ = std::move(edges);
    return s;
  }

  PriorKind kind() const { return kind_; }
  Index dimension() const { return alpha_.size(); }
  const Vector& exponents() const { return alpha_; }
  const Vector& second_parameter() const { return second_; }
  double gamma() const { return gamma_; }
  double zeta() const { return zeta_; }
  const EdgeList& edges() const { return edges_; }
  double mrf_weight() const { return zeta_ * (1.0 + zeta_) / (2.0 * gamma_ * gamma_); }

  double log_density(const Vector& th) const {
    require_dim(th.size(), dimension(), "prior parameter");
    double s = 0.0;
    for (Index j = 0; j < th.size(); ++j) {
      const double a = alpha_[j] - 1.0;
      if (a != 0.0) s += a * safe_log(th[j]);
    }
    return s + smooth_log(th);
  }

  // log p(theta) - sum_j (alpha_j - 1) log theta_j: the factor c_pi(theta)
  // that is continuous at the boundary.
  double smooth_log(const Vector& th) const {
    require_dim(th.size(), dimension(), "prior parameter");
    double s = 0.0;
    switch (kind_) {
      case PriorKind::PowerLaw: break;
      case PriorKind::BetaConjugate:
        for (Index j = 0; j < th.size(); ++j) {
          const double b = second_[j] - 1.0;
          if (b != 0.0) s += b * safe_log(1.0 - th[j]);
        }
        break;
      case PriorKind::GammaConjugate: s -= second_.dot(th); break;
      case PriorKind::LogCoshMRF: {
        for (auto [a, b] : edges_) s += log_cosh((th[a] - th[b]) / zeta_);
        s *= -mrf_weight();
        break;
      }
    }
    return s;
  }

  Vector gradient(const Vector& th) const {
    require_dim(th.size(), dimension(), "prior parameter");
    Vector g = Vector::Zero(th.size());
    for (Index j = 0; j < th.size(); ++j) {
      const double a = alpha_[j] - 1.0;
      if (a != 0.0) g[j] += th[j] > 0.0 ? a / th[j] : (a > 0.0 ? kInf : -kInf);
    }
    switch (kind_) {
      case PriorKind::PowerLaw: break;
      case PriorKind::BetaConjugate:
        for (Index j = 0; j < th.size(); ++j) {
          const double b = second_[j] - 1.0;
          if (b != 0.0) g[j] -= b / (1.0 - th[j]);
        }
        break;
      case PriorKind::GammaConjugate: g -= second_; break;
      case PriorKind::LogCoshMRF: {
        const double w = mrf_weight() / zeta_;
        for (auto [a, b] : edges_) {
          const double t = std::tanh((th[a] - th[b]) / zeta_);
          g[a] -= w * t;
          g[b] += w * t;
        }
        break;
      }
    }
    return g;
  }

  Matrix hessian(const Vector& th) const {
    require_dim(th.size(), dimension(), "prior parameter");
    Matrix h = Matrix::Zero(th.size(), th.size());
    for (Index j = 0; j < th.size(); ++j) {
      const double a = alpha_[j] - 1.0;
      if (a != 0.0) h(j, j) -= a / (th[j] * th[j]);
    }
    if (kind_ == PriorKind::BetaConjugate) {
      for (Index j = 0; j < th.size(); ++j) {
        const double b = second_[j] - 1.0;
        if (b != 0.0) h(j, j) -= b / ((1.0 - th[j]) * (1.0 - th[j]));
      }
    } else if (kind_ == PriorKind::LogCoshMRF) {
      const double w = mrf_weight() / (zeta_ * zeta_);
      for (auto [a, b] : edges_) {
        const double c = std::cosh((th[a] - th[b]) / zeta_);
        const double v = w / (c * c);
        h(a, a) -= v;
        h(b, b) -= v;
        h(a, b) += v;
        h(b, a) += v;
      }
    }
    return h;
  }

 private:
  PriorSpec(PriorKind k, Vector alpha) : kind_(k), alpha_(std::move(alpha)) {
    for (Index j = 0; j < alpha_.size(); ++j)
      if (!(alpha_[j] > 0.0)) throw DomainError("prior exponents must be positive");
  }

  PriorKind kind_;
  Vector alpha_;
  Vector second_;
  double gamma_ = 1.0, zeta_ = 1.0;
  EdgeList edges_;
};

// Unnormalized log posterior l_y(theta)/sigma^2 + log p(theta).
inline double log_posterior_kernel(const ScaledLikelihood& m, const PriorSpec& prior, const ParameterPoint& th) {
  require_dim(th.dimension(), m.dimension(), "log_posterior_kernel");
  require_dim(prior.dimension(), m.dimension(), "log_posterior_kernel prior");
  const double lp = prior.log_density(th.values());
  if (lp == -kInf) return -kInf;
  return m.value(th.values()) / m.sigma2() + lp;
}

}  // namespace bvm
