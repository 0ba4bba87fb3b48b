#pragma once

// Coordinate classification at the true parameter, the local quadratic
// expansion, the scaling transform and the sandwich verifier.

#include "bvm/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <optional>
#include <random>

namespace bvm {

struct BoundaryPartition {
  IndexList s0_interior;  // zero limit score, theta* > 0
  IndexList s0_boundary;  // zero limit score, theta* = 0
  IndexList s1;           // strictly negative limit score
  IndexList order;        // permuted coordinate order: interior, boundary, s1
  double eps_grad = 0.0;

  Index p() const { return static_cast<Index>(order.size()); }
  Index p0() const { return static_cast<Index>(s0_interior.size() + s0_boundary.size()); }
  Index p0_star() const { return static_cast<Index>(s0_boundary.size()); }
  Index p1() const { return static_cast<Index>(s1.size()); }
  IndexList s0() const {
    IndexList out = s0_interior;
    out.insert(out.end(), s0_boundary.begin(), s0_boundary.end());
    return out;
  }
  // Row k of U has its single 1 in column order[k], so (U theta)_k = theta_{order[k]}.
  Matrix permutation_matrix() const {
    Matrix U = Matrix::Zero(p(), p());
    for (Index k = 0; k < p(); ++k) U(k, order[k]) = 1.0;
    return U;
  }
};

inline double default_eps_grad(const Vector& grad_star) {
  return 1e-8 * (1.0 + (grad_star.size() ? grad_star.cwiseAbs().maxCoeff() : 0.0));
}

inline BoundaryPartition classify(const ParameterPoint& theta_star, const Vector& grad_star,
                                  std::optional<double> eps_grad = {}) {
  require_dim(grad_star.size(), theta_star.dimension(), "classify gradient");
  BoundaryPartition part;
  part.eps_grad = eps_grad.value_or(default_eps_grad(grad_star));
  if (!(part.eps_grad >= 0.0)) throw DomainError("classify: tolerance must be nonnegative");
  for (Index j = 0; j < grad_star.size(); ++j) {
    const double g = grad_star[j];
    if (!std::isfinite(g)) throw DomainError("classify: non-finite gradient at coordinate " + std::to_string(j));
    if (g > part.eps_grad)
      throw DomainError("classify: positive limit gradient at coordinate " + std::to_string(j) +
                        "; theta* cannot maximise the limit");
    if (g < -part.eps_grad) {
      if (theta_star[j] > 0.0)
        throw DomainError("classify: negative limit gradient at interior coordinate " + std::to_string(j));
      part.s1.push_back(j);
    } else if (theta_star[j] == 0.0) {
      part.s0_boundary.push_back(j);
    } else {
      part.s0_interior.push_back(j);
    }
  }
  part.order = part.s0_interior;
  part.order.insert(part.order.end(), part.s0_boundary.begin(), part.s0_boundary.end());
  part.order.insert(part.order.end(), part.s1.begin(), part.s1.end());
  return part;
}

struct LocalQuadratic {
  Matrix omega;  // Omega_00, p0 x p0, in the permuted S0 order
  Vector a0;
  Vector a1;
  Vector alpha0;
  Vector alpha1;
  double sigma = 1.0;

  double lambda_min() const {
    if (omega.rows() == 0) return kInf;
    Eigen::SelfAdjointEigenSolver<Matrix> es(omega, Eigen::EigenvaluesOnly);
    return es.eigenvalues()[0];
  }
  double a_min() const { return a1.size() ? a1.minCoeff() : kInf; }
};

enum class InformationSource { Auto, Limit, Data };

// Omega_00 = -Hessian of l* (or of l_Y) on S0 x S0 at theta*, a0 = Omega^{-1}
// grad_{S0} l_Y(theta*) / sigma, a1 = -grad_{S1} l*(theta*), exponents from the prior.
inline LocalQuadratic local_quadratic(const ScaledLikelihood& model, const PriorSpec& prior,
                                      const BoundaryPartition& part, const ParameterPoint& theta_star,
                                      InformationSource source = InformationSource::Auto) {
  require_dim(theta_star.dimension(), model.dimension(), "local_quadratic");
  require_dim(prior.dimension(), model.dimension(), "local_quadratic prior");
  const Vector& ts = theta_star.values();
  const bool use_limit = source == InformationSource::Limit ||
                         (source == InformationSource::Auto && model.has_limit());
  const IndexList s0 = part.s0();
  LocalQuadratic lq;
  lq.sigma = model.sigma();
  lq.alpha0 = gather(prior.exponents(), part.s0_boundary);
  lq.alpha1 = gather(prior.exponents(), part.s1);

  const Vector grad_limit = use_limit ? model.limit_gradient(ts, ts) : model.gradient(ts);
  lq.a1 = -gather(grad_limit, part.s1);
  for (Index k = 0; k < lq.a1.size(); ++k)
    if (!(lq.a1[k] > 0.0)) throw DomainError("local_quadratic: a1 must be positive");

  if (!s0.empty()) {
    const Matrix H = use_limit ? model.limit_hessian(ts, ts) : model.hessian(ts);
    lq.omega = -gather(H, s0, s0);
    lq.omega = 0.5 * (lq.omega + lq.omega.transpose());
    Eigen::LLT<Matrix> llt(lq.omega);
    if (llt.info() != Eigen::Success)
      throw SingularInformationError(
          "local_quadratic: Omega_00 is not positive definite; remove redundant parameters or merge "
          "collinear columns");
    const Vector g0 = gather(model.gradient(ts), s0);
    lq.a0 = llt.solve(g0) / lq.sigma;
  } else {
    lq.omega.resize(0, 0);
    lq.a0.resize(0);
  }
  return lq;
}

// v = D_sigma^{-1} U (theta - theta*).
class ScalingTransform {
 public:
  ScalingTransform(BoundaryPartition part, ParameterPoint theta_star, double sigma)
      : part_(std::move(part)), ts_(std::move(theta_star)), sigma_(sigma) {
    require_dim(ts_.dimension(), part_.p(), "ScalingTransform");
    if (!(sigma_ > 0.0)) throw DomainError("ScalingTransform: sigma must be positive");
  }

  double scale(Index k) const { return k < part_.p0() ? sigma_ : sigma_ * sigma_; }

  Vector forward(const ParameterPoint& theta) const {
    require_dim(theta.dimension(), part_.p(), "transform_forward");
    Vector v(part_.p());
    for (Index k = 0; k < part_.p(); ++k) {
      const Index j = part_.order[k];
      v[k] = (theta[j] - ts_[j]) / scale(k);
    }
    return v;
  }

  ParameterPoint inverse(const Vector& v) const {
    require_dim(v.size(), part_.p(), "transform_inverse");
    Vector th(part_.p());
    for (Index k = 0; k < part_.p(); ++k) {
      const Index j = part_.order[k];
      double x = ts_[j] + scale(k) * v[k];
      if (x < 0.0) {
        if (x < -1e-12) throw DomainError("transform_inverse: point maps outside the parameter space");
        x = 0.0;
      }
      th[j] = x;
    }
    return ParameterPoint(th);
  }

  const BoundaryPartition& partition() const { return part_; }
  const ParameterPoint& theta_star() const { return ts_; }
  double sigma() const { return sigma_; }

 private:
  BoundaryPartition part_;
  ParameterPoint ts_;
  double sigma_;
};

inline Vector transform_forward(const ScalingTransform& t, const ParameterPoint& th) { return t.forward(th); }
inline ParameterPoint transform_inverse(const ScalingTransform& t, const Vector& v) { return t.inverse(v); }

// Theta*(delta) = {theta >= 0 : |theta_{S0} - theta*_{S0}|_2 < d0, |theta_{S1}|_inf < d1}.
struct Radii {
  double d0 = 0.0;
  double d1 = 0.0;
};

inline bool in_neighbourhood(const BoundaryPartition& part, const ParameterPoint& ts, Radii delta,
                             const Vector& th) {
  double r2 = 0.0;
  for (Index j : part.s0()) r2 += (th[j] - ts[j]) * (th[j] - ts[j]);
  if (part.p0() > 0 && !(std::sqrt(r2) < delta.d0)) return false;
  for (Index j : part.s1)
    if (!(std::abs(th[j]) < delta.d1)) return false;
  for (Index j = 0; j < th.size(); ++j)
    if (th[j] < 0.0) return false;
  return true;
}

// Uniform draws from Theta*(delta) intersected with the orthant.
template <class Rng>
std::vector<Vector> sample_neighbourhood(const BoundaryPartition& part, const ParameterPoint& ts, Radii delta,
                                         Rng& rng, std::size_t k) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const IndexList s0 = part.s0();
  const auto p0 = static_cast<double>(s0.size());
  std::vector<Vector> out;
  out.reserve(k);
  std::size_t attempts = 0;
  while (out.size() < k) {
    if (++attempts > 1000 * k + 1000000)
      throw ParameterRegimeError("sample_neighbourhood: neighbourhood has negligible overlap with the orthant");
    Vector th = ts.values();
    if (!s0.empty()) {
      Vector dir(static_cast<Index>(s0.size()));
      for (Index i = 0; i < dir.size(); ++i) dir[i] = normal(rng);
      const double nrm = dir.norm();
      if (nrm == 0.0) continue;
      const double r = delta.d0 * std::pow(unif(rng), 1.0 / p0);
      dir *= r / nrm;
      // |.| on boundary coordinates keeps uniformity on the half ball
      for (std::size_t i = 0; i < s0.size(); ++i) {
        const Index j = s0[i];
        const double step = i >= part.s0_interior.size() ? std::abs(dir[static_cast<Index>(i)])
                                                          : dir[static_cast<Index>(i)];
        th[j] = ts[j] + step;
      }
    }
    for (Index j : part.s1) th[j] = delta.d1 * unif(rng);
    bool ok = true;
    for (Index j = 0; j < th.size(); ++j)
      if (th[j] < 0.0) ok = false;
    if (ok) out.push_back(std::move(th));
  }
  return out;
}

struct SandwichReport {
  std::size_t samples = 0;
  std::size_t violations = 0;
  double max_violation = 0.0;
  // Observed sup over (a subsample of) the draws of the quantities that the
  // event A0 and A1 bound by delta*_0 and delta*_1.
  double hessian_deviation = 0.0;
  double gradient_deviation = 0.0;
  std::size_t event_samples = 0;
  bool events_hold = true;
};

// Lower and upper quadratic-linear bounds on l_Y(theta) - l_Y(theta*).
struct SandwichBounds {
  double lower, upper;
};

inline SandwichBounds sandwich_bounds(const BoundaryPartition& part, const LocalQuadratic& lq,
                                      const Vector& ts, const Vector& g0, Radii dstar, const Vector& th) {
  const IndexList s0 = part.s0();
  Vector d(static_cast<Index>(s0.size()));
  for (std::size_t i = 0; i < s0.size(); ++i) d[static_cast<Index>(i)] = th[s0[i]] - ts[s0[i]];
  const double lin = d.dot(g0);
  const double quad = d.size() ? d.dot(lq.omega * d) : 0.0;
  const double dd = d.squaredNorm();
  double s1_lin = 0.0, s1_sum = 0.0;
  for (std::size_t i = 0; i < part.s1.size(); ++i) {
    const double x = th[part.s1[i]];
    s1_lin += lq.a1[static_cast<Index>(i)] * x;
    s1_sum += x;
  }
  return {lin - 0.5 * (quad + dstar.d0 * dd) - (s1_lin + dstar.d1 * s1_sum),
          lin - 0.5 * (quad - dstar.d0 * dd) - (s1_lin - dstar.d1 * s1_sum)};
}

inline SandwichReport sandwich_check(const ScaledLikelihood& model, const BoundaryPartition& part,
                                     const LocalQuadratic& lq, const ParameterPoint& theta_star, Radii delta,
                                     Radii dstar, const std::vector<Vector>& samples,
                                     std::size_t event_samples = 200) {
  SandwichReport rep;
  const Vector& ts = theta_star.values();
  const IndexList s0 = part.s0();
  const double l_star = model.value(ts);
  const Vector g0 = gather(model.gradient(ts), s0);
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const Vector& th = samples[n];
    if (!in_neighbourhood(part, theta_star, delta, th)) continue;
    ++rep.samples;
    const double l = model.value(th);
    const double diff = l - l_star;
    const double tol = 64.0 * 2.2e-16 * (std::abs(l) + std::abs(l_star));
    const auto b = sandwich_bounds(part, lq, ts, g0, dstar, th);
    const double viol = std::max(b.lower - diff, diff - b.upper);
    if (viol > tol) {
      ++rep.violations;
      rep.max_violation = std::max(rep.max_violation, viol);
    }
    if (rep.event_samples < event_samples) {
      ++rep.event_samples;
      if (!s0.empty()) {
        const Matrix E = gather(model.hessian(th), s0, s0) + lq.omega;
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (E + E.transpose()), Eigen::EigenvaluesOnly);
        rep.hessian_deviation = std::max(rep.hessian_deviation, es.eigenvalues().cwiseAbs().maxCoeff());
      }
      if (!part.s1.empty()) {
        const Vector g1 = gather(model.gradient(th), part.s1) + lq.a1;
        rep.gradient_deviation = std::max(rep.gradient_deviation, g1.cwiseAbs().maxCoeff());
      }
    }
  }
  rep.events_hold = rep.hessian_deviation <= dstar.d0 && rep.gradient_deviation <= dstar.d1;
  return rep;
}

// Halve the radii from `start` until the events bounding the Hessian and
// gradient deviations by dstar hold on a pilot of `pilot` draws.
template <class Rng>
Radii calibrate_radii(const ScaledLikelihood& model, const BoundaryPartition& part, const LocalQuadratic& lq,
                      const ParameterPoint& theta_star, Radii dstar, Radii start, Rng& rng,
                      std::size_t pilot = 200, int max_halvings = 80) {
  Radii d = start;
  for (int k = 0; k <= max_halvings; ++k) {
    const auto smp = sample_neighbourhood(part, theta_star, d, rng, pilot);
    if (sandwich_check(model, part, lq, theta_star, d, dstar, smp, pilot).events_hold) return d;
    d.d0 *= 0.5;
    d.d1 *= 0.5;
  }
  throw ParameterRegimeError("calibrate_radii: deviation events fail at every radius tried");
}

}  // namespace bvm
