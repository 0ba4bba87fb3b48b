#pragma once
// Reference experiments shared by the acceptance runner and the command-line tool.

#include "bvm/boundary.hpp"
#include "bvm/diagnostics.hpp"
#include "bvm/limitdist.hpp"
#include "bvm/mcmc.hpp"
#include "bvm/model.hpp"
#include "bvm/spect.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <string>

namespace bvm {

// Wall-clock seconds since construction.
class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

// TV between Gamma(shape, r1) and Gamma(shape, r2): the densities cross once.
inline double gamma_pair_tv(double shape, double r1, double r2) {
  if (r1 == r2) return 0.0;
  const double x = shape * std::log(r1 / r2) / (r1 - r2);
  return 2.0 * std::abs(gamma_lower(r1 * x, shape) - gamma_lower(r2 * x, shape));
}

// ---------------------------------------------------------------------------
// One-dimensional Poisson with zero counts: n theta | Y ~ Gamma(alpha, 1 + b/n)
// under the prior theta^(alpha-1) e^(-b theta).
// ---------------------------------------------------------------------------

struct PoissonBoundCase {
  double sigma = 0.0;
  double delta1 = 0.0;
  double tv_exact = 0.0;
  BoundReport report;
};

inline PoissonBoundCase poisson_bound_case(double sigma, double alpha = 0.5, double b = 1.0, double c_delta = 2.0,
                                           double dstar1 = 1e-12) {
  PoissonBoundCase out;
  out.sigma = sigma;
  const PoissonGLM m(Matrix::Ones(1, 1), Vector::Zero(1), sigma);
  const PriorSpec prior = PriorSpec::gamma(Vector::Constant(1, alpha), Vector::Constant(1, b));
  const ParameterPoint ts{0.0};
  const auto part = classify(ts, m.limit_gradient(ts.values(), ts.values()));
  const auto lq = local_quadratic(m, prior, part, ts);
  const double s2 = sigma * sigma;
  const double n = 1.0 / s2;
  const double d1 = c_delta * s2 * std::log(1.0 / sigma);
  out.delta1 = d1;
  BoundInput in{lq, part, ts, {0.0, d1}, {0.0, dstar1}};
  in.c_pi = 0.5 * (1.0 + std::exp(-b * d1));
  in.delta_pi = std::tanh(0.5 * b * d1);
  // n^alpha int_{d1}^inf e^{-n t} t^(alpha-1) e^(-b t) dt
  in.delta0 = std::exp(alpha * std::log(n) + std::lgamma(alpha) - alpha * std::log(n + b)) *
              gamma_tail((n + b) * d1, alpha);
  out.report = tv_bound(in);
  out.tv_exact = gamma_pair_tv(alpha, 1.0 + b * s2, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Binomial with one interior and one boundary success probability.
// Boundary coordinate: theta_2 | Y ~ Beta(alpha, n omega_2 + 1); limit of
// n theta_2 is Gamma(alpha, a1) with a1 from the local expansion.
// ---------------------------------------------------------------------------

struct BinomialTVCase {
  double n = 0.0;
  double a1 = 0.0;
  TVEstimate tv;
};

inline BinomialTVCase binomial_boundary_tv(double n, double alpha = 0.5, double theta1 = 0.3,
                                           Vector omega = (Vector(2) << 0.5, 0.5).finished()) {
  BinomialTVCase out;
  out.n = n;
  const Vector trials = n * omega;
  const Binomial m((Vector(2) << std::round(theta1 * trials[0]), 0.0).finished(), trials);
  const ParameterPoint ts{theta1, 0.0};
  const auto part = classify(ts, m.limit_gradient(ts.values(), ts.values()));
  if (part.p1() != 1) throw ParameterRegimeError("binomial_boundary_tv: expected one boundary coordinate");
  const auto lq = local_quadratic(m, PriorSpec::power_law(Vector::Constant(2, alpha)), part, ts);
  out.a1 = lq.a1[0];
  const double nb = trials[1] + 1.0;
  const double lbeta = std::lgamma(alpha) + std::lgamma(nb) - std::lgamma(alpha + nb);
  // density of v = n theta_2
  auto exact = [=](double v) {
    if (v <= 0.0 || v >= n) return -kInf;
    const double t = v / n;
    return (alpha - 1.0) * std::log(t) + (nb - 1.0) * std::log1p(-t) - lbeta - std::log(n);
  };
  auto limit = [shape = alpha, rate = out.a1](double v) { return gamma_log_pdf(v, shape, rate); };
  TVOptions opt;
  opt.scale = 1.0 / out.a1;
  out.tv = tv_quadrature_1d(exact, limit, 0.0, kInf, opt);
  return out;
}

// ---------------------------------------------------------------------------
// Sandwich inequality on sampled neighbourhoods, with the deviation radii
// dstar = frac * min(lambda_min, a_min) and delta calibrated so that the
// Hessian and gradient deviation events hold.
// ---------------------------------------------------------------------------

struct SandwichCase {
  std::string name;
  Radii delta;
  Radii dstar;
  SandwichReport report;
};

inline SandwichCase run_sandwich(std::string name, const ScaledLikelihood& m, const PriorSpec& prior,
                                 const ParameterPoint& ts, InformationSource src, std::size_t draws,
                                 Radii start, std::uint64_t seed, double frac = 0.05) {
  SandwichCase out;
  out.name = std::move(name);
  std::mt19937_64 rng(seed);
  const auto part = classify(ts, m.limit_gradient(ts.values(), ts.values()));
  const auto lq = local_quadratic(m, prior, part, ts, src);
  const double lam = part.p0() ? lq.lambda_min() : kInf;
  const double amin = part.p1() ? lq.a_min() : kInf;
  const double ds = frac * std::min(lam, amin);
  out.dstar = {ds, ds};
  out.delta = calibrate_radii(m, part, lq, ts, out.dstar, start, rng);
  out.report = sandwich_check(m, part, lq, ts, out.delta, out.dstar, sample_neighbourhood(part, ts, out.delta, rng, draws));
  return out;
}

// Poisson GLM with two interior coordinates and one boundary coordinate seen
// only by a zero-mean ray, so S1 is non-empty.
inline SandwichCase poisson_sandwich(std::size_t draws, std::uint64_t seed, double exposure = 1e4) {
  Matrix A(5, 3);
  A << 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.5, 1.0;
  const Vector ts = (Vector(3) << 1.0, 2.0, 0.0).finished();
  std::mt19937_64 rng(seed);
  const Vector mu = exposure * A * ts;
  Vector y(5);
  for (Index i = 0; i < 5; ++i) y[i] = mu[i] > 0.0 ? std::poisson_distribution<long>(mu[i])(rng) / exposure : 0.0;
  const PoissonGLM m(A, y, 1.0 / std::sqrt(exposure));
  return run_sandwich("poisson", m, PriorSpec::flat(3), ParameterPoint(ts), InformationSource::Data, draws,
                      {0.05, 0.05}, seed + 1);
}

inline SandwichCase binomial_sandwich(std::size_t draws, std::uint64_t seed, double trials = 5000.0) {
  std::mt19937_64 rng(seed);
  std::binomial_distribution<long> bin(static_cast<long>(trials), 0.3);
  const Binomial m((Vector(2) << static_cast<double>(bin(rng)), 0.0).finished(), Vector::Constant(2, trials));
  return run_sandwich("binomial", m, PriorSpec::flat(2), ParameterPoint{0.3, 0.0}, InformationSource::Limit, draws,
                      {0.05, 0.05}, seed + 1);
}

// ---------------------------------------------------------------------------
// SPECT desk pipeline: simulate, MAP, plug-in approximation, posterior chain,
// agreement of chain moments with the plug-in predictions.
// ---------------------------------------------------------------------------

inline SpectGeometry desk_geometry() {
  SpectGeometry g;  // 16 x 16 grid, 32 projections x 24 bins, T = 1000
  g.attenuation = 0.1;
  return g;
}

struct SpectDeskConfig {
  SpectGeometry geometry = desk_geometry();
  DiskPhantom phantom;
  SpectPriorConfig prior;
  MapOptions map;
  PluginOptions plugin;
  ChainConfig chain = [] {
    ChainConfig c;
    c.sweeps = 300000;
    c.burn_in = 30000;
    c.thin = 20;
    return c;
  }();
  double start_floor = 1e-6;  // chains start at max(MAP, floor) so every coordinate can move
  std::uint64_t seed = 1;
  int threads = 1;
};

struct SpectDeskResult {
  SpectInstance instance;
  MapResult map;
  PluginApprox plugin;
  ChainOutput chain;
  AgreementTable table;
  double seconds_setup = 0.0, seconds_chain = 0.0;
};

inline SpectInstance desk_instance(const SpectDeskConfig& c) {
  c.geometry.validate();
  const SparseMatrix A = build_system_matrix(c.geometry, c.threads);
  const Vector th = make_phantom(c.geometry, c.phantom);
  std::mt19937_64 rng(c.seed);
  return simulate(c.geometry, A, th, make_spect_prior(c.geometry, c.prior), rng);
}

inline SpectDeskResult spect_desk(const SpectDeskConfig& c) {
  Stopwatch sw;
  SpectDeskResult r;
  r.instance = desk_instance(c);
  r.map = map_estimate(r.instance, c.map);
  r.plugin = plugin_approx(r.instance, r.map.theta, c.plugin);
  r.seconds_setup = sw.seconds();
  SpectTarget tgt(r.instance, r.map.theta.cwiseMax(c.start_floor));
  ChainConfig cc = c.chain;
  cc.seed = c.seed + 1;
  std::mt19937_64 rng(cc.seed);
  r.chain = run_chain(tgt, cc, rng);
  r.table = agreement_stats(r.chain, r.plugin, r.instance.sigma());
  r.seconds_chain = sw.seconds() - r.seconds_setup;
  return r;
}

// Sandwich on the desk instance, expanded at the phantom with the data information.
inline SandwichCase spect_sandwich(std::size_t draws, std::uint64_t seed) {
  SpectDeskConfig c;
  c.seed = seed;
  c.prior.flat = true;
  const auto inst = desk_instance(c);
  return run_sandwich("spect", inst.model(), inst.prior, ParameterPoint(*inst.theta_true), InformationSource::Data,
                      draws, {1e-2, 1e-2}, seed + 1);
}

}  // namespace bvm
