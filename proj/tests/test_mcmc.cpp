#include "bvm/mcmc.hpp"
#include "bvm/special.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace bvm;

namespace {

ChainOutput run_1d(std::function<double(double)> logpdf, double x0, long sweeps, std::uint64_t seed,
                   SqrtMode mode = SqrtMode::Jacobian) {
  FunctionTarget t([f = std::move(logpdf)](const Vector& v) { return f(v[0]); }, Vector::Constant(1, x0));
  ChainConfig cfg;
  cfg.sweeps = sweeps;
  cfg.burn_in = 2000;
  cfg.seed = seed;
  cfg.mode = mode;
  std::mt19937_64 rng(seed);
  return run_chain(t, cfg, rng);
}

double quantile(Vector x, double f) {
  std::sort(x.data(), x.data() + x.size());
  const double pos = f * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<Index>(std::floor(pos));
  const Index hi = std::min<Index>(lo + 1, x.size() - 1);
  return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

double log_gamma_kernel(double x, double shape, double rate) {
  if (x < 0.0) return -kInf;
  if (x == 0.0) return shape < 1.0 ? kInf : (shape == 1.0 ? 0.0 : -kInf);
  return (shape - 1.0) * std::log(x) - rate * x;
}

}  // namespace

TEST(Chain, ExponentialMean) {
  const double a = 3.0;
  const auto out = run_1d([a](double x) { return -a * x; }, 1.0, 102000, 1);
  ASSERT_EQ(out.samples.rows(), 100000);
  const auto mo = marginal_moments(out, 0);
  EXPECT_NEAR(mo.mean, 1.0 / a, 3.0 * mo.mean_se);
  EXPECT_GE(out.samples.minCoeff(), 0.0);
}

TEST(Chain, GammaNinetyFifthPercentile) {
  const double n = 200.0;
  const auto out = run_1d([n](double x) { return log_gamma_kernel(x, 0.5, n); }, 0.01, 102000, 2);
  const double ref = gamma_quantile(0.05, 0.5) / n;
  EXPECT_NEAR(quantile(out.samples.col(0), 0.95), ref, 0.02 * ref);
}

TEST(Chain, AcceptanceStrictlyInsideUnitInterval) {
  FunctionTarget t([](const Vector& v) { return -0.5 * v[0] * v[0]; }, Vector::Constant(1, 0.5));
  ChainConfig cfg;
  cfg.tune = false;
  cfg.sweeps = 5000;
  cfg.burn_in = 100;
  std::mt19937_64 rng(3);
  const auto out = run_chain(t, cfg, rng);
  EXPECT_GT(out.acceptance[0], 0.0);
  EXPECT_LT(out.acceptance[0], 1.0);
}

TEST(Chain, TunerReachesAcceptanceBand) {
  FunctionTarget t([](const Vector& v) { return -50.0 * v[0] - 0.5 * v[1] * v[1]; }, Vector::Constant(2, 0.5));
  ChainConfig cfg;
  cfg.sweeps = 30000;
  cfg.burn_in = 10000;
  std::mt19937_64 rng(4);
  const auto out = run_chain(t, cfg, rng);
  for (Index j = 0; j < 2; ++j) {
    EXPECT_GT(out.acceptance[j], 0.2) << j;
    EXPECT_LT(out.acceptance[j], 0.6) << j;
  }
}

TEST(Chain, SqrtFlatModeTargetsSquareRootScale) {
  // without the Jacobian, s = sqrt(theta) has density pi(s^2): theta ~ Gamma(1/2, rate) for an Exp target
  const auto out = run_1d([](double x) { return -2.0 * x; }, 0.3, 102000, 5, SqrtMode::SqrtFlat);
  const auto mo = marginal_moments(out, 0);
  EXPECT_NEAR(mo.mean, 0.25, 3.0 * mo.mean_se);
}

TEST(Chain, ExactMomentsForClosedFormTargets) {
  struct Case {
    std::function<double(double)> f;
    double mean, var, m4c;  // m4c: fourth central moment
  };
  // truncated normal N(1, 1) on [0, inf)
  const double a = -1.0;
  const double phi = std::exp(-0.5 * a * a) / std::sqrt(2.0 * kPi), Z = 0.5 * std::erfc(a / std::sqrt(2.0));
  const double lam = phi / Z;
  const double tn_mean = 1.0 + lam, tn_var = 1.0 + a * lam - lam * lam;
  const std::vector<Case> cases{
      {[](double x) { return -1.5 * x; }, 1.0 / 1.5, 1.0 / 2.25, 9.0 / std::pow(1.5, 4)},
      {[](double x) { return log_gamma_kernel(x, 3.0, 2.0); }, 1.5, 0.75, 3.0 * 3.0 * (3.0 + 2.0) / 16.0},
      {[](double x) { return -0.5 * (x - 1.0) * (x - 1.0); }, tn_mean, tn_var, 3.5 * tn_var * tn_var},
  };
  std::uint64_t seed = 10;
  for (const auto& c : cases) {
    const auto out = run_1d(c.f, c.mean, 102000, seed++);
    const auto mo = marginal_moments(out, 0);
    EXPECT_NEAR(mo.mean, c.mean, 3.0 * std::sqrt(c.var / mo.ess)) << seed;
    // variance SE from a fourth-moment bound (a generous 3.5 sigma^4 for the truncated normal)
    EXPECT_NEAR(mo.var, c.var, 3.0 * std::sqrt((c.m4c - c.var * c.var) / mo.ess) + 3.0 * std::sqrt(c.var / mo.ess) * std::sqrt(c.var / mo.ess)) << seed;
  }
}

TEST(Chain, SingleStepDetailedBalance) {
  // start from exact Gamma(2, 1) draws, take one kernel step, bin (from, to)
  std::mt19937_64 rng(20);
  std::gamma_distribution<double> g(2.0, 1.0);
  const std::vector<double> edges{0.5, 1.0, 1.5, 2.2, 3.2};
  auto bin = [&](double x) { return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin()); };
  const int K = static_cast<int>(edges.size()) + 1;
  std::vector<double> N(static_cast<std::size_t>(K * K), 0.0);
  ChainConfig cfg;
  cfg.sweeps = 1;
  cfg.burn_in = 0;
  cfg.tune = false;
  cfg.step = 0.6;
  const int reps = 200000;
  for (int r = 0; r < reps; ++r) {
    const double x0 = g(rng);
    FunctionTarget t([](const Vector& v) { return log_gamma_kernel(v[0], 2.0, 1.0); }, Vector::Constant(1, x0));
    const auto out = run_chain(t, cfg, rng);
    N[static_cast<std::size_t>(bin(x0) * K + bin(out.samples(0, 0)))] += 1.0;
  }
  int off_diagonal = 0;
  for (int i = 0; i < K; ++i)
    for (int j = i + 1; j < K; ++j) {
      const double a = N[static_cast<std::size_t>(i * K + j)], b = N[static_cast<std::size_t>(j * K + i)];
      if (a + b > 0.0) ++off_diagonal;
      EXPECT_LE(std::abs(a - b), 4.0 * std::sqrt(a + b + 1.0)) << i << "->" << j;
    }
  EXPECT_GT(off_diagonal, 5);
}

TEST(Chain, ReproducibleForFixedSeed) {
  auto make = [](std::size_t) {
    return FunctionTarget([](const Vector& v) { return -v[0] - 2.0 * v[1] + 0.3 * std::sqrt(v[0] * v[1]); },
                          Vector::Constant(2, 0.4));
  };
  ChainConfig cfg;
  cfg.sweeps = 5000;
  cfg.burn_in = 500;
  const auto a = run_chains(make, cfg, {7, 8, 9}, 1);
  const auto b = run_chains(make, cfg, {7, 8, 9}, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ((a[c].samples - b[c].samples).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((a[c].steps - b[c].steps).cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_GT((a[0].samples - a[1].samples).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Chain, ConfigErrors) {
  FunctionTarget t([](const Vector& v) { return -v[0]; }, Vector::Ones(1));
  std::mt19937_64 rng(1);
  ChainConfig cfg;
  cfg.burn_in = cfg.sweeps;
  EXPECT_THROW(run_chain(t, cfg, rng), ConfigError);
  cfg = ChainConfig{};
  cfg.thin = 0;
  EXPECT_THROW(run_chain(t, cfg, rng), ConfigError);
  cfg = ChainConfig{};
  cfg.step = -1.0;
  EXPECT_THROW(run_chain(t, cfg, rng), ConfigError);
  FunctionTarget neg([](const Vector& v) { return -v[0]; }, Vector::Constant(1, -1.0));
  EXPECT_THROW(run_chain(neg, ChainConfig{}, rng), DomainError);
}

TEST(Chain, NaNTargetAbortsWithCoordinate) {
  FunctionTarget t([](const Vector& v) { return v[1] > 0.7 ? kNaN : -v[0] - v[1]; }, Vector::Constant(2, 0.5));
  ChainConfig cfg;
  std::mt19937_64 rng(2);
  try {
    run_chain(t, cfg, rng);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos);
  }
}

TEST(Summaries, ExponentialModeNearZero) {
  const auto out = run_1d([](double x) { return -x; }, 1.0, 52000, 30);
  const auto m = kde_mode(Vector(out.samples.col(0)));
  EXPECT_LE(std::abs(marginal_mode(out, 0)), 2.0 * m.bandwidth);
}

TEST(Summaries, GaussianMode) {
  const double mu = 5.0, s = 0.5;
  const auto out = run_1d([=](double x) { return -0.5 * (x - mu) * (x - mu) / (s * s); }, mu, 52000, 31);
  const double h = silverman_bandwidth(Vector(out.samples.col(0)));
  EXPECT_NEAR(marginal_mode(out, 0), mu, 3.0 * s / std::sqrt(out.ess[0]) + h);
}

TEST(Summaries, GammaMode) {
  const auto out = run_1d([](double x) { return log_gamma_kernel(x, 2.0, 1.0); }, 1.0, 52000, 32);
  const double h = silverman_bandwidth(Vector(out.samples.col(0)));
  EXPECT_NEAR(marginal_mode(out, 0), 1.0, 2.0 * h);
}

TEST(Summaries, InsufficientEssIsDiagnosed) {
  ChainOutput c;
  c.samples = Matrix::Constant(50, 1, 1.0);
  c.samples(3, 0) = 2.0;
  EXPECT_THROW(marginal_moments(c, 0), DiagnosticError);
  EXPECT_THROW(marginal_mode(c, 0), DiagnosticError);
}

TEST(Summaries, EssOfIndependentAndCorrelatedSeries) {
  std::mt19937_64 rng(40);
  std::normal_distribution<double> z(0.0, 1.0);
  const Index n = 20000;
  Vector iid(n), ar(n);
  double prev = 0.0;
  for (Index i = 0; i < n; ++i) {
    iid[i] = z(rng);
    prev = 0.9 * prev + z(rng);
    ar[i] = prev;
  }
  EXPECT_NEAR(effective_sample_size(iid) / n, 1.0, 0.1);
  // AR(1) with phi = 0.9: n (1 - phi) / (1 + phi)
  EXPECT_NEAR(effective_sample_size(ar) / n, 0.1 / 1.9, 0.015);
}
