#pragma once

// Coordinatewise random-walk Metropolis on the square-root scale, plus chain
// summaries (effective sample size, kernel-density mode, moments).

#include "bvm/core.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <complex>
#include <functional>
#include <random>
#include <thread>

namespace bvm {

// Jacobian: target theta, including |d theta / d s| = 2 s.
// SqrtFlat: treat the kernel as a density in s = sqrt(theta).
enum class SqrtMode { Jacobian, SqrtFlat };

struct ChainConfig {
  long sweeps = 20000;
  long burn_in = 2000;
  long thin = 1;
  double step = 0.25;
  Vector steps;  // per-coordinate steps; empty selects `step` everywhere
  bool tune = true;
  long tune_window = 100;
  double accept_lo = 0.3, accept_hi = 0.5;
  SqrtMode mode = SqrtMode::Jacobian;
  std::uint64_t seed = 1;
  long refresh_every = 1000;  // sweeps between calls to target.refresh(), if provided

  void validate() const {
    if (sweeps < 1 || burn_in < 0 || burn_in >= sweeps) throw ConfigError("chain: need 0 <= burn_in < sweeps");
    if (thin < 1) throw ConfigError("chain: thinning must be at least 1");
    if (!(step > 0.0)) throw ConfigError("chain: step must be positive");
    for (Index j = 0; j < steps.size(); ++j)
      if (!(steps[j] > 0.0)) throw ConfigError("chain: per-coordinate steps must be positive");
  }
  long kept() const { return (sweeps - burn_in) / thin; }
};

struct ChainOutput {
  Matrix samples;     // kept sweeps x p
  Vector acceptance;  // post burn-in acceptance rate per coordinate
  Vector steps;       // steps used after tuning
  Vector ess;
};

// Log acceptance ratio for s -> s' given the log target ratio at theta = s^2.
inline double sqrt_scale_log_acceptance(double log_target_ratio, double s, double s_new, SqrtMode mode) {
  if (mode == SqrtMode::SqrtFlat) return log_target_ratio;
  if (s == 0.0) return log_target_ratio == -kInf ? -kInf : kInf;
  if (s_new == 0.0) return -kInf;
  return log_target_ratio + std::log(s_new) - std::log(s);
}

// Adapts a full-vector log density to the coordinate target interface.
class FunctionTarget {
 public:
  FunctionTarget(std::function<double(const Vector&)> logpdf, Vector theta0)
      : f_(std::move(logpdf)), theta_(std::move(theta0)) {
    current_ = f_(theta_);
    scratch_ = theta_;
  }
  Index dimension() const { return theta_.size(); }
  const Vector& state() const { return theta_; }
  double value(Index j) const { return theta_[j]; }
  double log_ratio(Index j, double v) {
    scratch_[j] = v;
    proposed_ = f_(scratch_);
    scratch_[j] = theta_[j];
    return proposed_ - current_;
  }
  void commit(Index j, double v) {
    theta_[j] = v;
    scratch_[j] = v;
    current_ = proposed_;
  }
  double current() const { return current_; }

 private:
  std::function<double(const Vector&)> f_;
  Vector theta_, scratch_;
  double current_ = 0.0, proposed_ = 0.0;
};

template <class T>
concept Refreshable = requires(T& t) { t.refresh(); };

inline Vector effective_sample_size(const Matrix& samples);

template <class Target, class Rng>
ChainOutput run_chain(Target& target, const ChainConfig& cfg, Rng& rng) {
  cfg.validate();
  const Index p = target.dimension();
  Vector steps = cfg.steps.size() ? cfg.steps : Vector::Constant(p, cfg.step);
  require_dim(steps.size(), p, "chain steps");
  {
    const Vector& th = target.state();
    for (Index j = 0; j < p; ++j)
      if (!(th[j] >= 0.0)) throw DomainError("run_chain: initial state must be nonnegative");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ChainOutput out;
  out.samples.resize(cfg.kept(), p);
  Eigen::VectorXi acc_window = Eigen::VectorXi::Zero(p);
  Eigen::Matrix<long, Eigen::Dynamic, 1> acc_total = Eigen::Matrix<long, Eigen::Dynamic, 1>::Zero(p);
  long row = 0;
  for (long sweep = 0; sweep < cfg.sweeps; ++sweep) {
    for (Index j = 0; j < p; ++j) {
      const double th = target.value(j);
      const double s = std::sqrt(th);
      const double s_new = std::abs(s + steps[j] * normal(rng));
      const double th_new = s_new * s_new;
      const double lr = target.log_ratio(j, th_new);
      if (std::isnan(lr)) throw NumericalError("run_chain: target returned NaN at coordinate " + std::to_string(j));
      const double la = sqrt_scale_log_acceptance(lr, s, s_new, cfg.mode);
      if (la >= 0.0 || std::log(unif(rng)) < la) {
        target.commit(j, th_new);
        ++acc_window[j];
        if (sweep >= cfg.burn_in) ++acc_total[j];
      }
    }
    if constexpr (Refreshable<Target>) {
      if (cfg.refresh_every > 0 && (sweep + 1) % cfg.refresh_every == 0) target.refresh();
    }
    if (sweep < cfg.burn_in && cfg.tune && (sweep + 1) % cfg.tune_window == 0) {
      for (Index j = 0; j < p; ++j) {
        const double rate = static_cast<double>(acc_window[j]) / static_cast<double>(cfg.tune_window);
        if (rate < cfg.accept_lo) steps[j] *= std::exp(rate - cfg.accept_lo - 0.1);
        else if (rate > cfg.accept_hi) steps[j] *= std::exp(rate - cfg.accept_hi + 0.1);
      }
    }
    if (sweep < cfg.burn_in && (sweep + 1) % cfg.tune_window == 0) acc_window.setZero();
    if (sweep >= cfg.burn_in && (sweep - cfg.burn_in + 1) % cfg.thin == 0 && row < out.samples.rows()) {
      out.samples.row(row++) = target.state().transpose();
    }
  }
  out.acceptance = acc_total.cast<double>() / static_cast<double>(cfg.sweeps - cfg.burn_in);
  out.steps = steps;
  out.ess = effective_sample_size(out.samples);
  return out;
}

// Independent chains in parallel; make_target(c) builds the target for chain c
// and chain c is seeded with seeds[c].
template <class MakeTarget>
std::vector<ChainOutput> run_chains(MakeTarget&& make_target, const ChainConfig& cfg,
                                    const std::vector<std::uint64_t>& seeds, int threads = 1) {
  std::vector<ChainOutput> outs(seeds.size());
  std::vector<std::exception_ptr> errs(seeds.size());
  auto one = [&](std::size_t c) {
    try {
      auto target = make_target(c);
      std::mt19937_64 rng(seeds[c]);
      outs[c] = run_chain(target, cfg, rng);
    } catch (...) {
      errs[c] = std::current_exception();
    }
  };
  const int nt = std::max(1, std::min<int>(threads, static_cast<int>(seeds.size())));
  std::vector<std::thread> pool;
  for (int t = 0; t < nt; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t c = static_cast<std::size_t>(t); c < seeds.size(); c += static_cast<std::size_t>(nt)) one(c);
    });
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  return outs;
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

// Autocorrelation by zero-padded FFT.
inline Vector autocorrelation(const Vector& x) {
  const Index n = x.size();
  Vector rho = Vector::Zero(n);
  if (n < 2) return rho;
  const double m = x.mean();
  Index len = 1;
  while (len < 2 * n) len <<= 1;
  std::vector<double> buf(static_cast<std::size_t>(len), 0.0);
  for (Index i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = x[i] - m;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, buf);
  for (auto& c : spec) c = std::complex<double>(std::norm(c), 0.0);
  std::vector<double> ac;
  fft.inv(ac, spec);
  if (!(ac[0] > 0.0)) return rho;
  for (Index t = 0; t < n; ++t) rho[t] = ac[static_cast<std::size_t>(t)] / ac[0];
  return rho;
}

// Geyer's initial monotone sequence estimator.
inline double effective_sample_size(const Vector& x) {
  const Index n = x.size();
  if (n < 4) return static_cast<double>(n);
  const Vector rho = autocorrelation(x);
  if (rho[0] == 0.0) return static_cast<double>(n);  // constant chain
  double tau = -1.0;
  double prev = kInf;
  for (Index k = 0; 2 * k + 1 < n; ++k) {
    double g = rho[2 * k] + rho[2 * k + 1];
    if (g <= 0.0) break;
    g = std::min(g, prev);
    prev = g;
    tau += 2.0 * g;
  }
  tau = std::max(tau, 1.0 / static_cast<double>(n));
  return static_cast<double>(n) / tau;
}

inline Vector effective_sample_size(const Matrix& samples) {
  Vector out(samples.cols());
  for (Index j = 0; j < samples.cols(); ++j) out[j] = effective_sample_size(Vector(samples.col(j)));
  return out;
}

inline constexpr double kMinSummaryEss = 100.0;

namespace detail {

inline void require_ess(const ChainOutput& c, Index j) {
  if (j < 0 || j >= c.samples.cols()) throw DimensionError("chain summary: coordinate out of range");
  const double e = c.ess.size() ? c.ess[j] : effective_sample_size(Vector(c.samples.col(j)));
  if (e < kMinSummaryEss)
    throw DiagnosticError("chain summary: effective sample size " + std::to_string(e) + " below " +
                          std::to_string(kMinSummaryEss) + " at coordinate " + std::to_string(j));
}

}  // namespace detail

inline double silverman_bandwidth(const Vector& x) {
  const Index n = x.size();
  const double m = x.mean();
  const double sd = std::sqrt((x.array() - m).square().sum() / static_cast<double>(std::max<Index>(n - 1, 1)));
  std::vector<double> v(x.data(), x.data() + n);
  std::sort(v.begin(), v.end());
  auto q = [&](double f) {
    const double pos = f * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  const double iqr = q(0.75) - q(0.25);
  double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  if (!(spread > 0.0)) spread = std::max(std::abs(m), 1.0) * 1e-12;
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

struct KdeMode {
  double mode;
  double bandwidth;
};

// Peak of a binned Gaussian kernel density estimate; reflected at 0 when the
// samples are nonnegative.
inline KdeMode kde_mode(const Vector& x) {
  const Index n = x.size();
  if (n < 2) throw DiagnosticError("kde_mode: need at least two samples");
  const double h = silverman_bandwidth(x);
  const double lo_x = x.minCoeff(), hi_x = x.maxCoeff();
  const bool reflect = lo_x >= 0.0;
  const double lo = reflect ? 0.0 : lo_x - 3.0 * h;
  const double hi = hi_x + 3.0 * h;
  constexpr Index M = 2048;
  const double dx = (hi - lo) / static_cast<double>(M - 1);
  if (!(dx > 0.0)) return {lo_x, h};
  Vector counts = Vector::Zero(M);
  for (Index i = 0; i < n; ++i) {
    const double f = (x[i] - lo) / dx;
    const auto k = std::min<Index>(M - 2, static_cast<Index>(std::floor(f)));
    const double w = f - static_cast<double>(k);
    counts[k] += 1.0 - w;
    counts[k + 1] += w;
  }
  const auto half = static_cast<Index>(std::ceil(5.0 * h / dx));
  Vector dens = Vector::Zero(M);
  for (Index k = 0; k < M; ++k) {
    if (counts[k] == 0.0) continue;
    for (Index d = -half; d <= half; ++d) {
      const double u = static_cast<double>(d) * dx / h;
      const double kv = counts[k] * std::exp(-0.5 * u * u);
      const Index t = k + d;
      if (t >= 0 && t < M) dens[t] += kv;
      if (reflect) {
        const Index r = -t;  // mirror image of grid point t about 0
        if (t <= 0 && r < M) dens[r] += kv;
      }
    }
  }
  Index best = 0;
  dens.maxCoeff(&best);
  double mode = lo + static_cast<double>(best) * dx;
  if (best > 0 && best + 1 < M) {
    const double a = dens[best - 1], b = dens[best], c = dens[best + 1];
    const double den = a - 2.0 * b + c;
    if (den < 0.0) mode += 0.5 * dx * (a - c) / den;
  }
  return {mode, h};
}

inline double marginal_mode(const ChainOutput& c, Index j) {
  detail::require_ess(c, j);
  return kde_mode(Vector(c.samples.col(j))).mode;
}

struct MarginalMoments {
  double mean, var, mean_se, ess;
};

inline MarginalMoments marginal_moments(const ChainOutput& c, Index j) {
  detail::require_ess(c, j);
  const Vector x = c.samples.col(j);
  const double n = static_cast<double>(x.size());
  const double m = x.mean();
  const double v = (x.array() - m).square().sum() / (n - 1.0);
  const double e = c.ess.size() ? c.ess[j] : effective_sample_size(x);
  return {m, v, std::sqrt(v / e), e};
}

}  // namespace bvm
