#include "bvm/model.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace bvm;

namespace {

Vector central_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-5) {
  Vector g(x.size());
  for (Index j = 0; j < x.size(); ++j) {
    Vector a = x, b = x;
    a[j] += h;
    b[j] -= h;
    g[j] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

Matrix central_hessian(const ScaledLikelihood& m, const Vector& x, double h = 1e-5) {
  Matrix H(x.size(), x.size());
  for (Index j = 0; j < x.size(); ++j) {
    Vector a = x, b = x;
    a[j] += h;
    b[j] -= h;
    H.col(j) = (m.gradient(a) - m.gradient(b)) / (2.0 * h);
  }
  return H;
}

void check_gradient(const ScaledLikelihood& m, const std::function<Vector(std::mt19937_64&)>& draw) {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 100; ++k) {
    const Vector th = draw(rng);
    const Vector g = m.gradient(th);
    const Vector fd = central_gradient([&](const Vector& x) { return m.value(x); }, th);
    EXPECT_LT((g - fd).cwiseAbs().maxCoeff(), 1e-4 * (1.0 + g.cwiseAbs().maxCoeff())) << "point " << k;
  }
}

Matrix random_design(Index n, Index p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Matrix A(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) A(i, j) = u(rng);
  return A;
}

MixedEffects::Data mixed_data(int m, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::chi_squared_distribution<double> chi(m - 1);
  MixedEffects::Data d;
  d.m = m;
  d.class_means.resize(k);
  d.class_ss.resize(k);
  for (int i = 0; i < k; ++i) {
    d.class_means[i] = 1.0 + z(rng) / std::sqrt(m);
    d.class_ss[i] = chi(rng);
  }
  return d;
}

}  // namespace

TEST(ParameterPoint, RejectsNegativeCoordinates) {
  EXPECT_THROW(ParameterPoint({0.1, -0.2}), DomainError);
  EXPECT_THROW(ParameterPoint(Vector::Constant(1, kNaN)), DomainError);
  ParameterPoint p{0.0, 2.0};
  EXPECT_TRUE(p.on_boundary(0));
  EXPECT_FALSE(p.on_boundary(1));
}

TEST(PoissonGLM, ZeroCountValue) {
  PoissonGLM m(Matrix::Ones(1, 1), Vector::Zero(1), 1.0);
  EXPECT_DOUBLE_EQ(eval_scaled_loglik(m, ParameterPoint{0.3}), -0.3);
  EXPECT_DOUBLE_EQ(eval_scaled_loglik(m, ParameterPoint{0.0}), 0.0);
}

TEST(PoissonGLM, LogOfZeroMeanIsDomainError) {
  PoissonGLM m(Matrix::Ones(1, 1), Vector::Ones(1), 1.0);
  EXPECT_THROW(eval_scaled_loglik(m, ParameterPoint{0.0}), DomainError);
  EXPECT_EQ(m.value_or_neg_inf(Vector::Zero(1)), -kInf);
}

TEST(PoissonGLM, DimensionMismatch) {
  PoissonGLM m(Matrix::Ones(2, 2), Vector::Ones(2), 1.0);
  EXPECT_THROW(eval_scaled_loglik(m, ParameterPoint{1.0}), DimensionError);
  EXPECT_THROW(PoissonGLM(Matrix::Ones(2, 2), Vector::Ones(3), 1.0), DimensionError);
  EXPECT_THROW(PoissonGLM(-Matrix::Ones(2, 2), Vector::Ones(2), 1.0), DomainError);
}

TEST(PoissonGLM, LimitHessianIsWeightedGram) {
  std::mt19937_64 rng(3);
  const Matrix A = random_design(12, 4, rng);
  const Vector ts = (Vector(4) << 1.0, 0.5, 2.0, 0.3).finished();
  const Vector ystar = A * ts;
  PoissonGLM m(A, ystar, 0.1);
  const Matrix H = m.limit_hessian(ts, ts);
  const Matrix ref = -A.transpose() * ystar.cwiseInverse().asDiagonal() * A;
  EXPECT_LT((H - ref).cwiseAbs().maxCoeff(), 1e-12);
  // and the finite-difference Hessian of the noise-free likelihood
  EXPECT_LT((central_hessian(m, ts) - ref).cwiseAbs().maxCoeff(), 1e-4 * ref.cwiseAbs().maxCoeff());
}

TEST(PoissonGLM, NoiseFreeDataReproducesLimit) {
  std::mt19937_64 rng(4);
  const Matrix A = random_design(9, 3, rng);
  const Vector ts = (Vector(3) << 0.0, 1.5, 0.7).finished();
  PoissonGLM m(A, A * ts, 0.2);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int k = 0; k < 50; ++k) {
    const Vector th = Vector::NullaryExpr(3, [&](Index) { return u(rng); });
    EXPECT_NEAR(m.value(th), m.limit_value(th, ts), 1e-12 * (1.0 + std::abs(m.value(th))));
  }
}

TEST(PoissonGLM, LimitWithZeroRatesIsNegativeLinear) {
  PoissonGLM m(Matrix::Ones(1, 1), Vector::Zero(1), 0.5);
  for (double t : {0.0, 0.2, 1.0, 5.0}) EXPECT_DOUBLE_EQ(m.limit_value(Vector::Constant(1, t), Vector::Zero(1)), -t);
}

TEST(PoissonGLM, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const Matrix A = random_design(10, 4, rng);
  std::poisson_distribution<int> pois(8.0);
  Vector y(10);
  for (Index i = 0; i < 10; ++i) y[i] = pois(rng) / 4.0;
  PoissonGLM m(A, y, 0.5);
  check_gradient(m, [](std::mt19937_64& r) {
    std::uniform_real_distribution<double> u(0.05, 3.0);
    return Vector(Vector::NullaryExpr(4, [&](Index) { return u(r); }));
  });
}

TEST(PoissonGLM, LimitIsMaximisedAtTruth) {
  // coordinate search on a grid around theta*, including boundary points
  const Matrix A = (Matrix(4, 2) << 1.0, 0.2, 0.3, 1.0, 0.5, 0.5, 1.0, 1.0).finished();
  const Vector ts = (Vector(2) << 0.8, 0.0).finished();
  PoissonGLM m(A, A * ts, 0.1);
  double best = -kInf;
  Vector arg(2);
  for (int i = 0; i <= 400; ++i)
    for (int j = 0; j <= 400; ++j) {
      const Vector th = (Vector(2) << 0.6 + 0.4 * i / 400.0, 0.2 * j / 400.0).finished();
      const double v = m.limit_value(th, ts);
      if (v > best) {
        best = v;
        arg = th;
      }
    }
  EXPECT_LT((arg - ts).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Binomial, ValueAtHalf) {
  Binomial m(Vector::Constant(1, 10.0), Vector::Constant(1, 10.0));
  EXPECT_NEAR(eval_scaled_loglik(m, ParameterPoint{0.5}), std::log(0.5), 1e-15);
}

TEST(Binomial, BoundaryLimitGradientIsMinusWeight) {
  Binomial m((Vector(2) << 30.0, 0.0).finished(), (Vector(2) << 100.0, 100.0).finished());
  const Vector ts = (Vector(2) << 0.3, 0.0).finished();
  const Vector g = m.limit_gradient(ts, ts);
  EXPECT_NEAR(g[0], 0.0, 1e-15);
  EXPECT_NEAR(g[1], -0.5, 1e-15);
}

TEST(Binomial, BoundaryLimitValue) {
  // theta* = 0: l*(theta) = omega log(1 - theta)
  Binomial m(Vector::Constant(1, 0.0), Vector::Constant(1, 50.0));
  for (double t : {0.0, 0.1, 0.5, 0.9})
    EXPECT_NEAR(m.limit_value(Vector::Constant(1, t), Vector::Zero(1)), std::log1p(-t), 1e-15);
}

TEST(Binomial, GradientMatchesFiniteDifferences) {
  Binomial m((Vector(3) << 3.0, 0.0, 17.0).finished(), (Vector(3) << 10.0, 20.0, 30.0).finished());
  check_gradient(m, [](std::mt19937_64& r) {
    std::uniform_real_distribution<double> u(0.02, 0.95);
    return Vector(Vector::NullaryExpr(3, [&](Index) { return u(r); }));
  });
}

TEST(Binomial, RejectsOutOfRange) {
  Binomial m(Vector::Constant(1, 3.0), Vector::Constant(1, 10.0));
  EXPECT_THROW(m.value(Vector::Constant(1, 1.5)), DomainError);
  EXPECT_THROW(Binomial(Vector::Constant(1, 11.0), Vector::Constant(1, 10.0)), DomainError);
}

TEST(MixedEffects, KnownLocationScaleLimit) {
  for (int m : {2, 4, 9}) {
    const auto d = mixed_data(m, 50, 11);
    const auto me = MixedEffects::known_location_scale(d, 0.0, 1.0);
    for (double t : {0.0, 0.3, 2.0}) {
      const double ref = -1.0 / (2.0 * m * (t + 1.0 / m)) - 0.5 * std::log(t + 1.0 / m);
      EXPECT_NEAR(me.limit_value(Vector::Constant(1, t), Vector::Zero(1)), ref, 1e-14);
    }
    EXPECT_NEAR(me.limit_gradient(Vector::Zero(1), Vector::Zero(1))[0], 0.0, 1e-13);
    EXPECT_NEAR(-me.limit_hessian(Vector::Zero(1), Vector::Zero(1))(0, 0), m * m / 2.0, 1e-12);
  }
}

TEST(MixedEffects, JointLimitInformation) {
  for (auto [m, tau] : {std::pair{4, 1.0}, std::pair{9, 2.0}, std::pair{3, 0.7}}) {
    const auto me = MixedEffects::joint(mixed_data(m, 40, 12));
    const double t2 = tau * tau;
    const Vector ts = (Vector(3) << 1.3, t2, 0.0).finished();
    const Matrix omega = -me.limit_hessian(ts, ts);
    Matrix ref = Matrix::Zero(3, 3);
    ref(0, 0) = m / t2;
    ref(1, 1) = m / (2.0 * t2 * t2);
    ref(1, 2) = ref(2, 1) = m / (2.0 * t2);
    ref(2, 2) = m * m / 2.0;
    EXPECT_LT((omega - ref).cwiseAbs().maxCoeff(), 1e-12) << m;
    EXPECT_LT(me.limit_gradient(ts, ts).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(MixedEffects, GradientMatchesFiniteDifferences) {
  const auto me = MixedEffects::joint(mixed_data(5, 30, 13));
  check_gradient(me, [](std::mt19937_64& r) {
    std::uniform_real_distribution<double> u(0.2, 2.0);
    return Vector((Vector(3) << u(r), u(r), 0.5 * u(r)).finished());
  });
}

TEST(Custom, EvaluatorsAreUsed) {
  CustomLikelihood c(
      1, 0.3, [](const Vector& t) { return -2.0 * t[0]; }, [](const Vector&) { return Vector::Constant(1, -2.0); },
      [](const Vector&) { return Matrix::Zero(1, 1); });
  EXPECT_DOUBLE_EQ(c.value(Vector::Constant(1, 1.5)), -3.0);
  EXPECT_FALSE(c.has_limit());
  EXPECT_THROW(c.limit_value(Vector::Zero(1), Vector::Zero(1)), UnsupportedError);
  EXPECT_THROW(c.value(Vector::Zero(2)), DimensionError);
}

TEST(Posterior, PowerLawPoissonKernelIsGamma) {
  const double n = 40.0, alpha = 0.5;
  PoissonGLM m(Matrix::Ones(1, 1), Vector::Zero(1), 1.0 / std::sqrt(n));
  const auto prior = PriorSpec::power_law(Vector::Constant(1, alpha));
  const double c = log_posterior_kernel(m, prior, ParameterPoint{1.0}) - ((alpha - 1.0) * 0.0 - n);
  for (double t : {0.01, 0.2, 3.0})
    EXPECT_NEAR(log_posterior_kernel(m, prior, ParameterPoint{t}), (alpha - 1.0) * std::log(t) - n * t + c, 1e-10);
  EXPECT_EQ(log_posterior_kernel(m, PriorSpec::power_law(Vector::Constant(1, 2.0)), ParameterPoint{0.0}), -kInf);
}

TEST(Posterior, FlatPriorKernelIsScaledLikelihood) {
  std::mt19937_64 rng(8);
  const Matrix A = random_design(5, 2, rng);
  PoissonGLM m(A, Vector::Constant(5, 2.0), 0.25);
  const ParameterPoint th{0.4, 1.1};
  EXPECT_NEAR(log_posterior_kernel(m, PriorSpec::flat(2), th), m.value(th.values()) / m.sigma2(), 1e-12);
}

TEST(Prior, LogCoshEqualNeighboursContributeZero) {
  const auto p = PriorSpec::log_cosh_mrf(2, 25.0, 8.0, {{0, 1}});
  EXPECT_DOUBLE_EQ(p.log_density(Vector::Ones(2)), 0.0);
}

TEST(Prior, LogCoshShiftInvariant) {
  const auto p = PriorSpec::log_cosh_mrf(4, 3.0, 2.0, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  const Vector th = (Vector(4) << 0.5, 2.0, 1.2, 7.0).finished();
  EXPECT_NEAR(p.log_density(th), p.log_density((th.array() + 3.7).matrix()), 1e-12);
}

TEST(Prior, LogCoshGradientAndHessian) {
  const auto p = PriorSpec::log_cosh_mrf(4, 3.0, 2.0, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  const Vector th = (Vector(4) << 0.5, 2.0, 1.2, 7.0).finished();
  const Vector fd = central_gradient([&](const Vector& x) { return p.log_density(x); }, th);
  EXPECT_LT((p.gradient(th) - fd).cwiseAbs().maxCoeff(), 1e-6);
  Matrix Hfd(4, 4);
  for (Index j = 0; j < 4; ++j) {
    Vector a = th, b = th;
    a[j] += 1e-5;
    b[j] -= 1e-5;
    Hfd.col(j) = (p.gradient(a) - p.gradient(b)) / 2e-5;
  }
  EXPECT_LT((p.hessian(th) - Hfd).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Prior, LogCoshIsStableForLargeDifferences) {
  EXPECT_NEAR(log_cosh(800.0), 800.0 - std::log(2.0), 1e-12);
  EXPECT_NEAR(log_cosh(-1e-4), 0.5e-8, 1e-15);
}

TEST(Prior, ConjugateFamilies) {
  const auto g = PriorSpec::gamma(Vector::Constant(1, 0.5), Vector::Constant(1, 2.0));
  EXPECT_NEAR(g.log_density(Vector::Constant(1, 0.25)), -0.5 * std::log(0.25) - 0.5, 1e-14);
  EXPECT_NEAR(g.smooth_log(Vector::Constant(1, 0.25)), -0.5, 1e-14);
  const auto b = PriorSpec::beta(Vector::Constant(1, 2.0), Vector::Constant(1, 3.0));
  EXPECT_NEAR(b.log_density(Vector::Constant(1, 0.2)), std::log(0.2) + 2.0 * std::log(0.8), 1e-14);
  EXPECT_THROW(PriorSpec::power_law(Vector::Constant(1, 0.0)), DomainError);
  EXPECT_THROW(PriorSpec::log_cosh_mrf(2, 1.0, 1.0, {{0, 2}}), DomainError);
}
