#pragma once

// Two-dimensional parallel-beam emission tomography test-bed.
//
// Pixel (r, c) has centre x = (c - (cols-1)/2) h, y = ((rows-1)/2 - r) h.
// Projection k looks along the direction t = (-sin phi_k, cos phi_k) and
// records the detector coordinate s = x cos phi_k + y sin phi_k. Row index of
// A is k * bins + b. A_ij is the area of pixel j inside strip i divided by the
// strip width, with optional attenuation exp(-mu * depth) through a circular
// body and a global decay factor.

#include "bvm/limitdist.hpp"
#include "bvm/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <random>
#include <thread>

namespace bvm {

struct SpectGeometry {
  Index rows = 16;
  Index cols = 16;
  double pixel_size = 1.0;
  Index projections = 32;
  Index bins = 24;
  double bin_width = 0.0;      // 0 selects pixel_size
  double arc = 2.0 * kPi;      // angular range covered by the projections
  double attenuation = 0.0;    // per unit length; 0 disables
  double body_radius = 0.0;    // 0 selects half the smaller grid side
  double decay = 1.0;          // global multiplicative factor
  double exposure = 1000.0;    // T; sigma = T^{-1/2}

  Index pixels() const { return rows * cols; }
  Index rays() const { return projections * bins; }
  double strip_width() const { return bin_width > 0.0 ? bin_width : pixel_size; }
  double body() const { return body_radius > 0.0 ? body_radius : 0.5 * pixel_size * std::min(rows, cols); }
  double sigma() const { return 1.0 / std::sqrt(exposure); }
  Index pixel_index(Index r, Index c) const { return r * cols + c; }
  double pixel_x(Index c) const { return (static_cast<double>(c) - 0.5 * static_cast<double>(cols - 1)) * pixel_size; }
  double pixel_y(Index r) const { return (0.5 * static_cast<double>(rows - 1) - static_cast<double>(r)) * pixel_size; }
  double angle(Index k) const { return arc * static_cast<double>(k) / static_cast<double>(projections); }
  double bin_centre(Index b) const {
    return (static_cast<double>(b) - 0.5 * static_cast<double>(bins - 1)) * strip_width();
  }

  void validate() const {
    if (rows < 1 || cols < 1 || projections < 1 || bins < 1)
      throw GeometryError("geometry: grid, projection and bin counts must be positive");
    if (!(pixel_size > 0.0) || !(strip_width() > 0.0) || !(arc > 0.0))
      throw GeometryError("geometry: pixel size, bin width and arc must be positive");
    if (!(attenuation >= 0.0) || !(decay > 0.0)) throw GeometryError("geometry: bad attenuation or decay");
    if (!(exposure > 0.0)) throw GeometryError("geometry: exposure must be positive");
  }
};

namespace detail {

// CDF of U1 + U2 with U1 ~ U(-a/2, a/2), U2 ~ U(-b/2, b/2).
inline double trapezoid_cdf(double x, double a, double b, double scale) {
  const double tiny = 1e-12 * scale;
  if (a < tiny || b < tiny) {
    const double w = std::max(a, b);
    if (w < tiny) return x >= 0.0 ? 1.0 : 0.0;
    return std::clamp((x + 0.5 * w) / w, 0.0, 1.0);
  }
  const double u = 0.5 * (a + b), v = 0.5 * std::abs(a - b);
  auto Q = [](double t) { return t > 0.0 ? 0.5 * t * t : 0.0; };
  return std::clamp((Q(x + u) - Q(x + v) - Q(x - v) + Q(x - u)) / (a * b), 0.0, 1.0);
}

// Length of {p + lambda t : lambda > 0} inside the disk of radius R.
inline double depth_in_disk(double px, double py, double tx, double ty, double R) {
  const double pt = px * tx + py * ty;
  const double disc = pt * pt - (px * px + py * py - R * R);
  if (disc <= 0.0) return 0.0;
  const double sq = std::sqrt(disc);
  const double hi = -pt + sq, lo = std::max(-pt - sq, 0.0);
  return std::max(0.0, hi - lo);
}

}  // namespace detail

inline SparseMatrix build_system_matrix(const SpectGeometry& g, int threads = 1) {
  g.validate();
  const double h = g.pixel_size, bw = g.strip_width(), R = g.body();
  const Index P = g.projections, B = g.bins;
  std::vector<std::vector<Eigen::Triplet<double>>> per_proj(static_cast<std::size_t>(P));

  auto work = [&](Index k) {
    auto& out = per_proj[static_cast<std::size_t>(k)];
    const double phi = g.angle(k), cp = std::cos(phi), sp = std::sin(phi);
    const double a = h * std::abs(cp), b = h * std::abs(sp);
    const double half = 0.5 * (a + b);
    for (Index r = 0; r < g.rows; ++r) {
      for (Index c = 0; c < g.cols; ++c) {
        const double x = g.pixel_x(c), y = g.pixel_y(r);
        const double s0 = x * cp + y * sp;
        double factor = g.decay;
        if (g.attenuation > 0.0) factor *= std::exp(-g.attenuation * detail::depth_in_disk(x, y, -sp, cp, R));
        // bins whose strip can overlap [s0 - half, s0 + half]
        const double f_lo = (s0 - half) / bw + 0.5 * static_cast<double>(B - 1) - 0.5;
        const double f_hi = (s0 + half) / bw + 0.5 * static_cast<double>(B - 1) + 0.5;
        const Index b_lo = std::max<Index>(0, static_cast<Index>(std::floor(f_lo)));
        const Index b_hi = std::min<Index>(B - 1, static_cast<Index>(std::ceil(f_hi)));
        for (Index bi = b_lo; bi <= b_hi; ++bi) {
          const double sc = g.bin_centre(bi);
          const double frac = detail::trapezoid_cdf(sc + 0.5 * bw - s0, a, b, h) -
                              detail::trapezoid_cdf(sc - 0.5 * bw - s0, a, b, h);
          const double v = frac * h * h / bw * factor;
          if (v > 1e-14 * h) out.emplace_back(k * B + bi, g.pixel_index(r, c), v);
        }
      }
    }
  };

  const int nt = std::max(1, std::min<int>(threads, static_cast<int>(P)));
  if (nt == 1) {
    for (Index k = 0; k < P; ++k) work(k);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t)
      pool.emplace_back([&, t] {
        for (Index k = t; k < P; k += nt) work(k);
      });
    for (auto& th : pool) th.join();
  }
  std::vector<Eigen::Triplet<double>> all;
  for (auto& v : per_proj) all.insert(all.end(), v.begin(), v.end());
  if (all.empty()) throw GeometryError("geometry: no ray intersects the pixel grid");
  SparseMatrix A(g.rays(), g.pixels());
  A.setFromTriplets(all.begin(), all.end());
  A.makeCompressed();
  return A;
}

// Pixel-neighbour pairs for the Markov random field prior.
inline EdgeList grid_edges(Index rows, Index cols, int connectivity = 4) {
  if (connectivity != 4 && connectivity != 8) throw DomainError("grid_edges: connectivity must be 4 or 8");
  EdgeList e;
  auto id = [cols](Index r, Index c) { return r * cols + c; };
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) {
      if (c + 1 < cols) e.emplace_back(id(r, c), id(r, c + 1));
      if (r + 1 < rows) e.emplace_back(id(r, c), id(r + 1, c));
      if (connectivity == 8 && r + 1 < rows) {
        if (c + 1 < cols) e.emplace_back(id(r, c), id(r + 1, c + 1));
        if (c > 0) e.emplace_back(id(r, c), id(r + 1, c - 1));
      }
    }
  return e;
}

// Disk of uniform activity with an optional hot disk and an interior cold
// disk; zero outside the activity radius. Radii and centres are in grid units.
struct DiskPhantom {
  double radius = 5.0;
  double level = 10.0;
  double hot_x = 2.0, hot_y = 1.5, hot_radius = 1.6, hot_level = 20.0;
  double cold_x = -2.0, cold_y = -1.5, cold_radius = 0.0;
};

inline Vector make_phantom(const SpectGeometry& g, const DiskPhantom& ph) {
  Vector th = Vector::Zero(g.pixels());
  for (Index r = 0; r < g.rows; ++r)
    for (Index c = 0; c < g.cols; ++c) {
      const double x = g.pixel_x(c) / g.pixel_size, y = g.pixel_y(r) / g.pixel_size;
      if (std::hypot(x, y) > ph.radius) continue;
      double v = ph.level;
      if (ph.hot_radius > 0.0 && std::hypot(x - ph.hot_x, y - ph.hot_y) <= ph.hot_radius) v = ph.hot_level;
      if (ph.cold_radius > 0.0 && std::hypot(x - ph.cold_x, y - ph.cold_y) <= ph.cold_radius) v = 0.0;
      th[g.pixel_index(r, c)] = v;
    }
  return th;
}

struct SpectPriorConfig {
  double gamma = 200.0;
  double zeta = 8.0;
  int connectivity = 4;
  bool flat = false;
};

inline PriorSpec make_spect_prior(const SpectGeometry& g, const SpectPriorConfig& c) {
  if (c.flat) return PriorSpec::flat(g.pixels());
  return PriorSpec::log_cosh_mrf(g.pixels(), c.gamma, c.zeta, grid_edges(g.rows, g.cols, c.connectivity));
}

struct SpectInstance {
  SpectGeometry geometry;
  SparseMatrix A;
  Vector counts;   // T * y, integer valued
  Vector y;        // counts / T
  std::optional<Vector> theta_true;
  PriorSpec prior = PriorSpec::flat(0);

  double sigma() const { return geometry.sigma(); }
  Index pixels() const { return A.cols(); }
  PoissonGLM model() const { return PoissonGLM(A, y, sigma()); }
};

template <class Rng>
SpectInstance simulate(const SpectGeometry& g, const SparseMatrix& A, const Vector& theta_true,
                       const PriorSpec& prior, Rng& rng) {
  require_dim(theta_true.size(), A.cols(), "simulate phantom");
  for (Index j = 0; j < theta_true.size(); ++j)
    if (!(theta_true[j] >= 0.0)) throw DomainError("simulate: phantom must be nonnegative");
  SpectInstance inst;
  inst.geometry = g;
  inst.A = A;
  inst.theta_true = theta_true;
  inst.prior = prior;
  const Vector mu = g.exposure * (A * theta_true);
  inst.counts.resize(mu.size());
  for (Index i = 0; i < mu.size(); ++i) {
    if (mu[i] > 0.0) {
      std::poisson_distribution<long long> pois(mu[i]);
      inst.counts[i] = static_cast<double>(pois(rng));
    } else {
      inst.counts[i] = 0.0;
    }
  }
  inst.y = inst.counts / g.exposure;
  return inst;
}

// Instance with data equal to the expected rates A theta.
inline SpectInstance noise_free_instance(const SpectGeometry& g, const SparseMatrix& A, const Vector& theta,
                                         const PriorSpec& prior) {
  SpectInstance inst;
  inst.geometry = g;
  inst.A = A;
  inst.theta_true = theta;
  inst.prior = prior;
  inst.y = A * theta;
  inst.counts = g.exposure * inst.y;
  return inst;
}

// ---------------------------------------------------------------------------
// MAP estimation of F(theta) = l_y(theta) + sigma^2 log p(theta) over theta >= 0
// ---------------------------------------------------------------------------

enum class MapAlgorithm { ProjectedNewton, ProjectedGradient, EM };

struct MapOptions {
  MapAlgorithm algorithm = MapAlgorithm::ProjectedNewton;
  double tol = 1e-9;
  int max_iter = 500;
};

struct MapResult {
  Vector theta;
  int iterations = 0;
  double objective = 0.0;
  double kkt_residual = 0.0;  // max_j |P(theta + g) - theta|_j
  bool converged = false;
};

struct MapNonConvergence : NonConvergenceError {
  MapNonConvergence(const std::string& msg, MapResult last) : NonConvergenceError(msg), result(std::move(last)) {}
  MapResult result;
};

namespace detail {

inline double kkt_residual(const Vector& th, const Vector& g) {
  double r = 0.0;
  for (Index j = 0; j < th.size(); ++j) r = std::max(r, std::abs(std::max(th[j] + g[j], 0.0) - th[j]));
  return r;
}

}  // namespace detail

inline MapResult map_estimate(const SpectInstance& inst, MapOptions opt = {}, std::optional<Vector> start = {}) {
  const PoissonGLM model = inst.model();
  const PriorSpec& prior = inst.prior;
  const double s2 = model.sigma2();
  const Index p = inst.pixels();
  const bool flat = prior.kind() == PriorKind::PowerLaw && (prior.exponents().array() == 1.0).all();
  if (prior.kind() == PriorKind::PowerLaw && !flat)
    throw UnsupportedError("map_estimate: power-law exponents other than 1 make the boundary objective singular");
  if (opt.algorithm == MapAlgorithm::EM && !flat) throw UnsupportedError("map_estimate: EM requires a flat prior");

  auto F = [&](const Vector& th) {
    const double l = model.value_or_neg_inf(th);
    return l == -kInf ? -kInf : l + s2 * prior.smooth_log(th);
  };
  auto grad = [&](const Vector& th) { return Vector(model.gradient(th) + s2 * prior.gradient(th)); };

  Vector th;
  if (start) {
    th = start->cwiseMax(0.0);
  } else {
    const double col_total = Vector(inst.A.transpose() * Vector::Ones(inst.A.rows())).sum();
    th = Vector::Constant(p, col_total > 0.0 ? inst.y.sum() / col_total : 0.0);
  }
  MapResult res;
  double f = F(th);
  if (f == -kInf) throw DomainError("map_estimate: starting point has zero likelihood");
  double step = 1.0;  // projected-gradient step memory

  for (int it = 0; it < opt.max_iter; ++it) {
    const Vector g = grad(th);
    res.kkt_residual = detail::kkt_residual(th, g);
    res.iterations = it;
    if (res.kkt_residual <= opt.tol) {
      res.converged = true;
      break;
    }
    if (opt.algorithm == MapAlgorithm::EM) {
      const Vector mu = inst.A * th;
      Vector ratio(mu.size());
      for (Index i = 0; i < mu.size(); ++i) ratio[i] = mu[i] > 0.0 ? inst.y[i] / mu[i] : 0.0;
      const Vector num = inst.A.transpose() * ratio;
      const Vector den = inst.A.transpose() * Vector::Ones(mu.size());
      for (Index j = 0; j < p; ++j) th[j] = den[j] > 0.0 ? th[j] * num[j] / den[j] : 0.0;
      f = F(th);
      continue;
    }
    Vector dir(p);
    if (opt.algorithm == MapAlgorithm::ProjectedNewton) {
      // Two-metric projection: Newton on the free set, gradient on the set held at zero.
      const double eps_act = std::min(1e-8, res.kkt_residual);
      IndexList freeset, active;
      for (Index j = 0; j < p; ++j) {
        if (th[j] <= eps_act && g[j] < 0.0) active.push_back(j);
        else freeset.push_back(j);
      }
      dir.setZero();
      for (Index j : active) dir[j] = g[j];
      if (!freeset.empty()) {
        const Matrix H = model.hessian(th) + s2 * prior.hessian(th);
        Matrix N = -gather(H, freeset, freeset);
        const double ridge = 1e-12 * (1.0 + N.diagonal().cwiseAbs().maxCoeff());
        N.diagonal().array() += ridge;
        Eigen::LDLT<Matrix> ldlt(N);
        const Vector gF = gather(g, freeset);
        Vector dF = ldlt.solve(gF);
        if (ldlt.info() != Eigen::Success || !dF.allFinite() || dF.dot(gF) <= 0.0) dF = gF;
        for (std::size_t k = 0; k < freeset.size(); ++k) dir[freeset[k]] = dF[static_cast<Index>(k)];
      }
    } else {
      dir = g;
    }
    // Projected Armijo search.
    double alpha = opt.algorithm == MapAlgorithm::ProjectedNewton ? 1.0 : std::min(1e6, 2.0 * step);
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector cand = (th + alpha * dir).cwiseMax(0.0);
      const double fc = F(cand);
      if (fc != -kInf && fc >= f + 1e-4 * g.dot(cand - th)) {
        accepted = true;
        th = cand;
        f = fc;
        step = alpha;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      res.theta = th;
      res.objective = f;
      throw MapNonConvergence("map_estimate: line search failed at iteration " + std::to_string(it), res);
    }
  }
  res.theta = th;
  res.objective = f;
  if (!res.converged) {
    res.kkt_residual = detail::kkt_residual(th, grad(th));
    if (res.kkt_residual <= opt.tol) {
      res.converged = true;
    } else {
      throw MapNonConvergence("map_estimate: iteration limit reached, KKT residual " +
                                  std::to_string(res.kkt_residual),
                              res);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Plug-in approximation around an estimate theta_hat
// ---------------------------------------------------------------------------

struct PluginOptions {
  double eps = 0.0;          // S1 threshold on the likelihood gradient
  double zero_tol = 1e-12;   // threshold on y_hat for the zero-mean ray set
  NormalizerMethod orthant_method = NormalizerMethod::Auto;
};

struct PluginApprox {
  Vector theta_hat;
  double sigma = 1.0;
  IndexList s0;       // ascending
  IndexList s0_star;  // members of s0 with theta_hat = 0, ascending
  IndexList s1;       // ascending
  IndexList z_rows;   // zero fitted mean
  Matrix omega;       // over s0 in ascending order
  Vector a_hat;       // over s1
  double log_orthant = 0.0;  // log P(N(0, omega^{-1}) lies in the orthant on s0_star)
  double orthant_rel_error = 0.0;

  Index p() const { return theta_hat.size(); }
  // Permuted coordinate order: s0 \ s0_star, s0_star, s1.
  IndexList order() const {
    IndexList out;
    for (Index j : s0)
      if (!std::binary_search(s0_star.begin(), s0_star.end(), j)) out.push_back(j);
    out.insert(out.end(), s0_star.begin(), s0_star.end());
    out.insert(out.end(), s1.begin(), s1.end());
    return out;
  }
  // Omega in the permuted s0 order.
  Matrix omega_permuted() const {
    const IndexList ord = order();
    IndexList pos;
    for (std::size_t k = 0; k < s0.size(); ++k) {
      const Index j = ord[k];
      pos.push_back(static_cast<Index>(std::lower_bound(s0.begin(), s0.end(), j) - s0.begin()));
    }
    return gather(omega, pos, pos);
  }
};

inline PluginApprox plugin_approx(const SpectInstance& inst, const Vector& theta_hat, PluginOptions opt = {}) {
  const Index p = inst.pixels();
  require_dim(theta_hat.size(), p, "plugin_approx");
  PluginApprox pa;
  pa.theta_hat = theta_hat;
  pa.sigma = inst.sigma();
  const Vector yhat = inst.A * theta_hat;
  std::vector<char> in_z(static_cast<std::size_t>(yhat.size()), 0);
  for (Index i = 0; i < yhat.size(); ++i)
    if (yhat[i] <= opt.zero_tol) {
      if (inst.y[i] > 0.0)
        throw DomainError("plugin_approx: ray " + std::to_string(i) + " has positive counts but zero fitted mean");
      in_z[static_cast<std::size_t>(i)] = 1;
      pa.z_rows.push_back(i);
    }
  // grad_j l_y(theta_hat) and column sums over the zero rays.
  Vector grad = Vector::Zero(p), zsum = Vector::Zero(p);
  for (Index j = 0; j < p; ++j)
    for (SparseMatrix::InnerIterator it(inst.A, j); it; ++it) {
      const Index i = it.row();
      if (in_z[static_cast<std::size_t>(i)]) {
        zsum[j] += it.value();
        grad[j] -= it.value();
      } else {
        grad[j] += (inst.y[i] / yhat[i] - 1.0) * it.value();
      }
    }
  for (Index j = 0; j < p; ++j) {
    // a negative score without zero rays comes from the prior balance at the
    // estimate and carries no exponential rate; such pixels stay in S0
    if (grad[j] < -opt.eps && zsum[j] > 0.0) pa.s1.push_back(j);
    else {
      pa.s0.push_back(j);
      if (theta_hat[j] == 0.0) pa.s0_star.push_back(j);
    }
  }
  pa.a_hat = gather(zsum, pa.s1);
  const Index p0 = static_cast<Index>(pa.s0.size());
  pa.omega = Matrix::Zero(p0, p0);
  if (p0 > 0) {
    std::vector<Index> pos(static_cast<std::size_t>(p), -1);
    for (Index k = 0; k < p0; ++k) pos[static_cast<std::size_t>(pa.s0[k])] = k;
    // row-wise accumulation via the transpose
    const Eigen::SparseMatrix<double, Eigen::RowMajor> Ar = inst.A;
    std::vector<std::pair<Index, double>> row;
    for (Index i = 0; i < Ar.rows(); ++i) {
      if (in_z[static_cast<std::size_t>(i)] || inst.y[i] == 0.0) continue;
      const double w = inst.y[i] / (yhat[i] * yhat[i]);
      row.clear();
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Ar, i); it; ++it) {
        const Index k = pos[static_cast<std::size_t>(it.col())];
        if (k >= 0) row.emplace_back(k, it.value());
      }
      for (auto [ka, va] : row)
        for (auto [kb, vb] : row) pa.omega(ka, kb) += w * va * vb;
    }
    Eigen::LLT<Matrix> llt(pa.omega);
    if (llt.info() != Eigen::Success) {
      std::string names;
      Eigen::SelfAdjointEigenSolver<Matrix> es(pa.omega);
      const Vector v = es.eigenvectors().col(0);
      for (Index k = 0; k < p0; ++k)
        if (std::abs(v[k]) > 0.2) names += (names.empty() ? "" : ", ") + std::to_string(pa.s0[k]);
      throw SingularInformationError("plugin_approx: estimated information is singular; collinear pixels: " +
                                     names);
    }
  }
  if (!pa.s0_star.empty()) {
    // Scale-free orthant probability of the Gaussian block on s0_star.
    const Index t = static_cast<Index>(pa.s0_star.size());
    const PTN base(Vector::Zero(p0), pa.omega_permuted(), t, Vector::Ones(t));
    const auto nz = ptn_normalizer(base, opt.orthant_method);
    Eigen::LLT<Matrix> llt(pa.omega);
    const Matrix L = llt.matrixL();
    const double log_gauss = 0.5 * p0 * std::log(2.0 * kPi) - L.diagonal().array().log().sum();
    pa.log_orthant = std::min(0.0, nz.log_value - log_gauss);
    pa.orthant_rel_error = nz.rel_error;
  }
  return pa;
}

// log phi(z), z = theta - theta_hat.
inline double plugin_logdensity(const PluginApprox& pa, const Vector& z, double sigma) {
  require_dim(z.size(), pa.p(), "plugin_logdensity");
  const double s2 = sigma * sigma;
  double lp = 0.0;
  for (std::size_t k = 0; k < pa.s1.size(); ++k) {
    const double v = z[pa.s1[k]];
    if (v < -pa.theta_hat[pa.s1[k]]) return -kInf;
    const double a = pa.a_hat[static_cast<Index>(k)];
    lp += std::log(a / s2) - a * v / s2;
  }
  for (Index j : pa.s0_star)
    if (z[j] < 0.0) return -kInf;
  const Index p0 = static_cast<Index>(pa.s0.size());
  if (p0 > 0) {
    const Vector z0 = gather(z, pa.s0);
    Eigen::LLT<Matrix> llt(pa.omega);
    const Matrix L = llt.matrixL();
    lp += -0.5 * p0 * std::log(2.0 * kPi * s2) + L.diagonal().array().log().sum() - z0.dot(pa.omega * z0) / (2.0 * s2);
    lp -= pa.log_orthant;
  }
  return lp;
}

// Limit measure of the plug-in approximation in scaled coordinates
// v = (z_{s0} / sigma, z_{s1} / sigma^2) in the order returned by order().
inline LimitMeasure plugin_limit_measure(const PluginApprox& pa, NormalizerMethod method = NormalizerMethod::None) {
  const Index p0 = static_cast<Index>(pa.s0.size());
  const Index t = static_cast<Index>(pa.s0_star.size());
  PTN ptn(Vector::Zero(p0), pa.omega_permuted(), t, Vector::Ones(t));
  return LimitMeasure(std::move(ptn), Vector::Ones(static_cast<Index>(pa.s1.size())), pa.a_hat, method);
}

// ---------------------------------------------------------------------------
// Single-coordinate log-posterior target with incremental mean updates, for
// the coordinatewise Metropolis sampler.
// ---------------------------------------------------------------------------

class SpectTarget {
 public:
  SpectTarget(const SpectInstance& inst, Vector theta0)
      : A_(inst.A), counts_(inst.counts), prior_(inst.prior), T_(inst.geometry.exposure), theta_(std::move(theta0)) {
    require_dim(theta_.size(), A_.cols(), "SpectTarget start");
    mu_ = A_ * theta_;
    nbr_.assign(static_cast<std::size_t>(A_.cols()), {});
    for (auto [a, b] : prior_.edges()) {
      nbr_[static_cast<std::size_t>(a)].push_back(b);
      nbr_[static_cast<std::size_t>(b)].push_back(a);
    }
    weight_ = prior_.kind() == PriorKind::LogCoshMRF ? prior_.mrf_weight() : 0.0;
  }

  Index dimension() const { return theta_.size(); }
  const Vector& state() const { return theta_; }
  double value(Index j) const { return theta_[j]; }

  // log pi(theta with theta_j = v) - log pi(theta)
  double log_ratio(Index j, double v) const {
    const double d = v - theta_[j];
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(A_, j); it; ++it) {
      const Index i = it.row();
      const double m0 = mu_[i], m1 = m0 + it.value() * d;
      if (counts_[i] > 0.0) {
        if (!(m1 > 0.0)) return -kInf;
        s += counts_[i] * std::log(m1 / m0);
      }
      s -= T_ * it.value() * d;
    }
    const double a = prior_.exponents()[j] - 1.0;
    if (a != 0.0) s += a * (safe_log(v) - safe_log(theta_[j]));
    if (weight_ > 0.0) {
      const double z = prior_.zeta();
      double pr = 0.0;
      for (Index k : nbr_[static_cast<std::size_t>(j)])
        pr += log_cosh((v - theta_[k]) / z) - log_cosh((theta_[j] - theta_[k]) / z);
      s -= weight_ * pr;
    }
    return s;
  }

  void commit(Index j, double v) {
    const double d = v - theta_[j];
    for (SparseMatrix::InnerIterator it(A_, j); it; ++it) mu_[it.row()] += it.value() * d;
    theta_[j] = v;
  }

  // Recompute the cached means to clear accumulated round-off.
  void refresh() { mu_ = A_ * theta_; }

 private:
  const SparseMatrix& A_;
  const Vector& counts_;
  const PriorSpec& prior_;
  double T_;
  Vector theta_;
  Vector mu_;
  std::vector<IndexList> nbr_;
  double weight_ = 0.0;
};

}  // namespace bvm
