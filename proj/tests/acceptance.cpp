// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "bvm/experiments.hpp"

#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace bvm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double time_limit;  // seconds
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

double quantile(Vector x, double f) {
  std::sort(x.data(), x.data() + x.size());
  const double pos = f * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<Index>(std::floor(pos));
  const Index hi = std::min<Index>(lo + 1, x.size() - 1);
  return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

// --- 1 ---------------------------------------------------------------------
Outcome poisson_exactness() {
  Outcome o{true, ""};
  double worst_q = 0.0, worst_tv = 0.0;
  for (auto [alpha, expect] : {std::pair{0.5, 1.92}, std::pair{0.05, 0.27}})
    for (double n : {1.0, 10.0, 100.0}) {
      const double s = 1.0 / std::sqrt(n);
      const PoissonGLM m(Matrix::Ones(1, 1), Vector::Zero(1), s);
      const ParameterPoint ts{0.0};
      const auto part = classify(ts, m.limit_gradient(ts.values(), ts.values()));
      const auto lq = local_quadratic(m, PriorSpec::power_law(Vector::Constant(1, alpha)), part, ts);
      if (part.p1() != 1) return {false, "origin not classified as S1"};
      const auto ci = gamma_credible_interval(lq.alpha1[0], lq.a1[0], 0.05, s);
      const double q = ci.hi * n;
      worst_q = std::max(worst_q, std::abs(q - expect));
      if (ci.lo != 0.0 || std::abs(q - expect) > 0.01) o.pass = false;
      // exact posterior of v = n theta: likelihood e^{-n theta} times theta^(alpha-1)
      auto exact = [=](double v) { return v <= 0.0 ? -kInf : (alpha - 1.0) * std::log(v / n) - v; };
      auto limit = [=, a = lq.alpha1[0], r = lq.a1[0]](double v) { return gamma_log_pdf(v, a, r); };
      const double tv = tv_quadrature_1d(exact, limit, 0.0, kInf).value;
      worst_tv = std::max(worst_tv, tv);
      if (!(tv < 1e-8)) o.pass = false;
    }
  o.detail = fmt("max |n*hi - ref| = %.2e (tol 1e-2), max TV = %.2e (tol 1e-8)", worst_q, worst_tv);
  return o;
}

// --- 2 ---------------------------------------------------------------------
Outcome mixed_effects() {
  double err = 0.0, err_inv = 0.0, err_corr = 0.0;
  for (auto [m, tau] : {std::pair{4, 1.0}, std::pair{9, 2.0}}) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(m));
    std::normal_distribution<double> z;
    std::chi_squared_distribution<double> chi(m - 1);
    MixedEffects::Data d;
    d.m = m;
    d.class_means.resize(50);
    d.class_ss.resize(50);
    for (Index i = 0; i < 50; ++i) {
      d.class_means[i] = 0.5 + tau * z(rng) / std::sqrt(m);
      d.class_ss[i] = tau * tau * chi(rng);
    }
    const auto me = MixedEffects::joint(d);
    const double t2 = tau * tau, md = m;
    const ParameterPoint ts{0.5, t2, 0.0};
    const auto part = classify(ts, me.limit_gradient(ts.values(), ts.values()));
    if (part.p0() != 3 || part.s0_boundary != IndexList{2}) return {false, "unexpected partition"};
    const auto lq = local_quadratic(me, PriorSpec::flat(3), part, ts);
    Matrix ref(3, 3), ref_inv(3, 3);
    ref << md / t2, 0, 0, 0, md / (2 * t2 * t2), md / (2 * t2), 0, md / (2 * t2), md * md / 2;
    ref_inv << t2 / md, 0, 0, 0, 2 * t2 * t2 / (md - 1), -2 * t2 / (md * (md - 1)), 0, -2 * t2 / (md * (md - 1)),
        2 / (md * (md - 1));
    const Matrix inv = lq.omega.inverse();
    err = std::max(err, (lq.omega - ref).cwiseAbs().maxCoeff());
    err_inv = std::max(err_inv, (inv - ref_inv).cwiseAbs().maxCoeff());
    const double corr = inv(1, 2) / std::sqrt(inv(1, 1) * inv(2, 2));
    err_corr = std::max(err_corr, std::abs(corr + 1.0 / std::sqrt(md)));
  }
  return {err <= 1e-12 && err_inv <= 1e-12 && err_corr <= 1e-12,
          fmt("max entry error %.2e, inverse %.2e, correlation %.2e (tol 1e-12)", err, err_inv, err_corr)};
}

// --- 3 ---------------------------------------------------------------------
Outcome binomial_limit() {
  std::vector<double> tv;
  for (double n : {1e2, 1e3, 1e4}) tv.push_back(binomial_boundary_tv(n).tv.value);
  const bool mono = tv[1] < tv[0] && tv[2] < tv[1];
  return {mono && tv[2] < 0.05, fmt("TV at n=1e2,1e3,1e4: %.4g %.4g %.4g (monotone %s, last < 0.05)", tv[0], tv[1],
                                    tv[2], mono ? "yes" : "no")};
}

// --- 4 ---------------------------------------------------------------------
Outcome sandwich() {
  std::ostringstream s;
  bool pass = true;
  for (const auto& c : {poisson_sandwich(10000, 1), binomial_sandwich(10000, 2), spect_sandwich(10000, 3)}) {
    const bool ok = c.report.samples == 10000 && c.report.violations == 0 && c.report.events_hold;
    pass = pass && ok;
    s << c.name << ": " << c.report.violations << "/" << c.report.samples << " violations, delta " << c.delta.d0
      << ", dstar " << c.dstar.d0 << (c.report.events_hold ? "" : " (events fail)") << "; ";
  }
  return {pass, s.str()};
}

// --- 5 ---------------------------------------------------------------------
Outcome nonasymptotic_bound() {
  std::ostringstream s;
  bool pass = true;
  double prev = kInf;
  for (double sigma : {0.2, 0.1, 0.05}) {
    const auto c = poisson_bound_case(sigma);
    const double b = c.report.total;
    pass = pass && c.report.admissible && b >= c.tv_exact && b < prev;
    prev = b;
    s << "sigma " << sigma << ": bound " << b << " tv " << c.tv_exact << "; ";
  }
  return {pass, s.str()};
}

// --- 6 ---------------------------------------------------------------------
Outcome mcmc_exactness() {
  const double n = 1000.0, shape = 0.5;
  auto make = [&](std::size_t) {
    return FunctionTarget(
        [=](const Vector& v) {
          const double x = v[0];
          return x < 0.0 ? -kInf : (x == 0.0 ? kInf : (shape - 1.0) * std::log(x) - n * x);
        },
        Vector::Constant(1, shape / n));
  };
  ChainConfig cfg;
  cfg.burn_in = 5000;
  cfg.thin = 10;
  cfg.sweeps = 5000 + 10 * 100000;
  const auto a = run_chains(make, cfg, {11, 11}, 1);
  const auto b = run_chains(make, cfg, {11}, 2);
  const bool identical = a[0].samples.size() == b[0].samples.size() &&
                         std::memcmp(a[0].samples.data(), b[0].samples.data(),
                                     static_cast<std::size_t>(a[0].samples.size()) * sizeof(double)) == 0 &&
                         std::memcmp(a[0].samples.data(), a[1].samples.data(),
                                     static_cast<std::size_t>(a[0].samples.size()) * sizeof(double)) == 0;
  const double ref = gamma_quantile(0.05, shape) / n;
  const double q = quantile(Vector(a[0].samples.col(0)), 0.95);
  const double rel = std::abs(q - ref) / ref;
  return {a[0].samples.rows() == 100000 && rel <= 0.02 && identical,
          fmt("kept %ld (thin 10), q95 %.5g vs %.5g (rel %.3g, tol 0.02), bit-identical %s", static_cast<long>(a[0].samples.rows()),
              q, ref, rel, identical ? "yes" : "no")};
}

// --- 7 ---------------------------------------------------------------------
Outcome spect_agreement() {
  SpectDeskConfig c;
  const auto r = spect_desk(c);
  const auto zero = (r.instance.theta_true->array() == 0.0).count();
  const bool ok = zero > 0 && !r.table.s1.empty() && !r.table.s0.empty() && r.table.s1_median <= 0.10 &&
                  r.table.s0_median <= 0.15;
  return {ok, fmt("|S1|=%zu median %.4f (tol 0.10); |S0|=%zu median %.4f (tol 0.15); zero pixels %ld; chain %.0f s",
                  r.table.s1.size(), r.table.s1_median, r.table.s0.size(), r.table.s0_median,
                  static_cast<long>(zero), r.seconds_chain)};
}

// --- 8 ---------------------------------------------------------------------
Outcome limit_numerics() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int agree = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const Index p0 = 1 + rep % 2;
    const Index trunc = 1 + (rep / 2) % p0;  // untruncated blocks have a closed form, nothing to sample
    Matrix B(p0, p0);
    for (Index i = 0; i < B.size(); ++i) B.data()[i] = u(rng);
    const Matrix om = B * B.transpose() + 0.3 * Matrix::Identity(p0, p0);
    Vector a0(p0), al(trunc);
    for (Index i = 0; i < p0; ++i) a0[i] = 1.5 * u(rng);
    for (Index i = 0; i < trunc; ++i) al[i] = 0.2 + 1.3 * (0.5 * (u(rng) + 1.0));
    const PTN d(a0, om, trunc, al);
    const auto q = ptn_normalizer(d, NormalizerMethod::Quadrature);
    const auto m = ptn_normalizer(d, NormalizerMethod::MonteCarlo, {200000, static_cast<std::uint64_t>(100 + rep)});
    const double z = std::exp(m.log_value - q.log_value) - 1.0;
    const double k = std::abs(z) / m.rel_error;
    worst = std::max(worst, k);
    if (k <= 3.0) ++agree;
  }
  double id = 0.0;
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) {
      const double alpha = std::pow(10.0, -1.5 + 3.0 * i / 19.0);  // 0.03 .. 30
      const double beta = 0.01 + 0.98 * j / 19.0;
      id = std::max(id, std::abs(gamma_tail(gamma_quantile(beta, alpha), alpha) - beta));
    }
  return {agree == 20 && id <= 1e-8,
          fmt("%d/20 within 3 SE (worst %.2f SE); max |Q(gamma_q(b))-b| = %.2e (tol 1e-8)", agree, worst, id)};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"poisson-exactness", 1.0, poisson_exactness},
      {"mixed-effects-matrices", 1.0, mixed_effects},
      {"binomial-limit", 10.0, binomial_limit},
      {"sandwich", 30.0, sandwich},
      {"nonasymptotic-bound", 10.0, nonasymptotic_bound},
      {"mcmc-exactness", 60.0, mcmc_exactness},
      {"spect-desk-agreement", 600.0, spect_agreement},
      {"limit-numerics", 30.0, limit_numerics},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Stopwatch sw;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double t = sw.seconds();
    const bool in_time = t < c.time_limit;
    const bool pass = o.pass && in_time;
    if (!pass) ++failed;
    std::cout << (pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << " [" << fmt("%.2f", t) << " s, limit "
              << c.time_limit << " s" << (in_time ? "" : ", OVER TIME") << "]" << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed ? 1 : 0;
}
