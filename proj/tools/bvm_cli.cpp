// bvm: config-driven runner for the boundary posterior approximations.

#include "bvm/experiments.hpp"
#include "bvm/io.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include <charconv>
#include <iostream>
#include <map>
#include <set>

#ifndef BVM_VERSION
#define BVM_VERSION "0.0.0"
#endif

using namespace bvm;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Built-in presets. configs/<name>.yaml carry the same content.
// ---------------------------------------------------------------------------

const std::map<std::string, std::string>& presets() {
  static const std::map<std::string, std::string> p{
      {"poisson-example", R"(experiment: poisson
poisson:
  alphas: [0.5, 0.05]
  ns: [1, 10, 100]
  level: 0.05
)"},
      {"binomial-limit", R"(experiment: binomial
binomial:
  alpha: 0.5
  theta1: 0.3
  omega: [0.5, 0.5]
  ns: [100, 1000, 10000]
)"},
      {"spect-desk", R"(experiment: spect
seed: 1
geometry:
  rows: 16
  cols: 16
  projections: 32
  bins: 24
  attenuation: 0.1
  exposure: 1000
prior:
  gamma: 200
  zeta: 8
chain:
  sweeps: 300000
  burn_in: 30000
  thin: 20
  format: binary
)"}};
  return p;
}

// ---------------------------------------------------------------------------
// Config documents: YAML (or JSON) -> JSON tree -> typed config
// ---------------------------------------------------------------------------

std::string current_stage = "config";

Json yaml_to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar: {
      const std::string& s = n.Scalar();
      if (n.Tag() == "!") return s;  // quoted
      if (s == "true" || s == "True") return true;
      if (s == "false" || s == "False") return false;
      if (s == "null" || s == "~") return nullptr;
      long long i = 0;
      if (auto r = std::from_chars(s.data(), s.data() + s.size(), i); r.ec == std::errc() && r.ptr == s.data() + s.size())
        return i;
      double d = 0.0;
      if (auto r = std::from_chars(s.data(), s.data() + s.size(), d); r.ec == std::errc() && r.ptr == s.data() + s.size())
        return d;
      return s;
    }
    case YAML::NodeType::Sequence: {
      Json a = Json::array();
      for (const auto& e : n) a.push_back(yaml_to_json(e));
      return a;
    }
    case YAML::NodeType::Map: {
      Json o = Json::object();
      for (const auto& kv : n) o[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return o;
    }
  }
  return nullptr;
}

Json parse_document(const std::string& text, const std::string& origin) {
  try {
    return yaml_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

Json load_document(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  const std::string text = read_text(path);
  if (path.extension() == ".json") {
    try {
      return Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return parse_document(text, path.string());
}

// Typed view of one mapping; rejects keys nobody asked for.
class Section {
 public:
  Section(Json j, std::string path) : j_(std::move(j)), path_(std::move(path)) {
    if (j_.is_null()) j_ = Json::object();
    if (!j_.is_object()) throw ConfigError(path_ + ": expected a mapping");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
  }
  Section(const Section&) = delete;

  template <class T>
  T get(const std::string& key, T def) {
    seen_.insert(key);
    if (!j_.contains(key) || j_[key].is_null()) return def;
    const Json& v = j_[key];
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
    } else if constexpr (std::is_arithmetic_v<T>) {
      if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
      if constexpr (std::is_integral_v<T>) {
        const double d = v.get<double>();
        if (d != std::floor(d)) throw ConfigError(where(key) + ": expected an integer");
        if constexpr (std::is_unsigned_v<T>)
          if (d < 0) throw ConfigError(where(key) + ": expected a non-negative integer");
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
    }
    try {
      return v.get<T>();
    } catch (const Json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  std::vector<double> list(const std::string& key, std::vector<double> def) {
    seen_.insert(key);
    if (!j_.contains(key) || j_[key].is_null()) return def;
    const Json& v = j_[key];
    if (!v.is_array() || v.empty()) throw ConfigError(where(key) + ": expected a non-empty list of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(where(key) + ": expected a non-empty list of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::string choice(const std::string& key, const std::string& def, std::initializer_list<const char*> allowed) {
    const auto s = get<std::string>(key, def);
    for (const char* a : allowed)
      if (s == a) return s;
    std::string msg = where(key) + ": '" + s + "' is not one of";
    for (const char* a : allowed) msg += std::string(" ") + a;
    throw ConfigError(msg);
  }

  Json raw(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? j_[key] : Json(nullptr);
  }

  std::string where(const std::string& key) const { return path_ + "." + key; }

 private:
  Json j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

struct Config {
  std::string experiment = "spect";
  std::uint64_t seed = 1;
  int threads = 1;
  SpectDeskConfig spect;
  std::string instance;  // load instead of simulating when set
  std::string chain_format = "binary";
  // poisson
  std::vector<double> p_alphas{0.5, 0.05}, p_ns{1, 10, 100};
  double p_level = 0.05;
  // binomial
  double b_alpha = 0.5, b_theta1 = 0.3;
  std::vector<double> b_omega{0.5, 0.5}, b_ns{1e2, 1e3, 1e4};
  // bound
  std::vector<double> bd_sigmas{0.2, 0.1, 0.05};
  double bd_alpha = 0.5, bd_b = 1.0, bd_c = 2.0;
  // sweep-eps
  std::vector<double> eps{0.0, 0.01, 0.1, 0.25, 0.5, 1.0, 2.0};
};

Config parse_config(const Json& doc) {
  Config c;
  Section top(doc, "config");
  c.experiment = top.choice("experiment", "spect", {"spect", "poisson", "binomial", "bound"});
  c.seed = top.get<std::uint64_t>("seed", 1);
  c.threads = top.get<int>("threads", 1);
  c.instance = top.get<std::string>("instance", "");
  {
    Section g(top.raw("geometry"), "geometry");
    auto& G = c.spect.geometry;
    G.rows = g.get<Index>("rows", G.rows);
    G.cols = g.get<Index>("cols", G.cols);
    G.pixel_size = g.get<double>("pixel_size", G.pixel_size);
    G.projections = g.get<Index>("projections", G.projections);
    G.bins = g.get<Index>("bins", G.bins);
    G.bin_width = g.get<double>("bin_width", G.bin_width);
    G.arc = g.get<double>("arc", G.arc);
    G.attenuation = g.get<double>("attenuation", G.attenuation);
    G.body_radius = g.get<double>("body_radius", G.body_radius);
    G.decay = g.get<double>("decay", G.decay);
    G.exposure = g.get<double>("exposure", G.exposure);
    try {
      G.validate();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  {
    Section p(top.raw("phantom"), "phantom");
    auto& P = c.spect.phantom;
    P.radius = p.get("radius", P.radius);
    P.level = p.get("level", P.level);
    P.hot_x = p.get("hot_x", P.hot_x);
    P.hot_y = p.get("hot_y", P.hot_y);
    P.hot_radius = p.get("hot_radius", P.hot_radius);
    P.hot_level = p.get("hot_level", P.hot_level);
    P.cold_x = p.get("cold_x", P.cold_x);
    P.cold_y = p.get("cold_y", P.cold_y);
    P.cold_radius = p.get("cold_radius", P.cold_radius);
    require(P.level >= 0.0 && P.hot_level >= 0.0, "phantom: activity levels must be non-negative");
  }
  {
    Section p(top.raw("prior"), "prior");
    auto& P = c.spect.prior;
    P.flat = p.get("flat", P.flat);
    P.gamma = p.get("gamma", P.gamma);
    P.zeta = p.get("zeta", P.zeta);
    P.connectivity = p.get("connectivity", P.connectivity);
    require(P.connectivity == 4 || P.connectivity == 8, "prior.connectivity: must be 4 or 8");
    require(P.gamma >= 0.0 && P.zeta > 0.0, "prior: need gamma >= 0 and zeta > 0");
  }
  {
    Section m(top.raw("map"), "map");
    const auto a = m.choice("algorithm", "projected-newton", {"projected-newton", "projected-gradient", "em"});
    c.spect.map.algorithm = a == "em" ? MapAlgorithm::EM
                            : a == "projected-gradient" ? MapAlgorithm::ProjectedGradient
                                                        : MapAlgorithm::ProjectedNewton;
    c.spect.map.tol = m.get("tol", c.spect.map.tol);
    c.spect.map.max_iter = m.get("max_iter", c.spect.map.max_iter);
    require(c.spect.map.tol > 0.0 && c.spect.map.max_iter > 0, "map: tol and max_iter must be positive");
  }
  {
    Section p(top.raw("plugin"), "plugin");
    c.spect.plugin.eps = p.get("eps", c.spect.plugin.eps);
    c.spect.plugin.zero_tol = p.get("zero_tol", c.spect.plugin.zero_tol);
    require(c.spect.plugin.eps >= 0.0 && c.spect.plugin.zero_tol >= 0.0, "plugin: thresholds must be non-negative");
  }
  {
    Section ch(top.raw("chain"), "chain");
    auto& C = c.spect.chain;
    C.sweeps = ch.get("sweeps", C.sweeps);
    C.burn_in = ch.get("burn_in", C.burn_in);
    C.thin = ch.get("thin", C.thin);
    C.step = ch.get("step", C.step);
    C.tune = ch.get("tune", C.tune);
    C.tune_window = ch.get("tune_window", C.tune_window);
    C.mode = ch.choice("mode", "jacobian", {"jacobian", "sqrt-flat"}) == "sqrt-flat" ? SqrtMode::SqrtFlat
                                                                                   : SqrtMode::Jacobian;
    c.spect.start_floor = ch.get("start_floor", c.spect.start_floor);
    c.chain_format = ch.choice("format", "binary", {"binary", "csv"});
    C.validate();
  }
  {
    Section p(top.raw("poisson"), "poisson");
    c.p_alphas = p.list("alphas", c.p_alphas);
    c.p_ns = p.list("ns", c.p_ns);
    c.p_level = p.get("level", c.p_level);
    for (double a : c.p_alphas) require(a > 0.0, "poisson.alphas: must be positive");
    for (double n : c.p_ns) require(n > 0.0, "poisson.ns: must be positive");
    require(c.p_level > 0.0 && c.p_level < 1.0, "poisson.level: must lie in (0, 1)");
  }
  {
    Section b(top.raw("binomial"), "binomial");
    c.b_alpha = b.get("alpha", c.b_alpha);
    c.b_theta1 = b.get("theta1", c.b_theta1);
    c.b_omega = b.list("omega", c.b_omega);
    c.b_ns = b.list("ns", c.b_ns);
    require(c.b_alpha > 0.0, "binomial.alpha: must be positive");
    require(c.b_theta1 > 0.0 && c.b_theta1 < 1.0, "binomial.theta1: must lie in (0, 1)");
    require(c.b_omega.size() == 2 && c.b_omega[0] > 0.0 && c.b_omega[1] > 0.0, "binomial.omega: two positive weights");
    for (double n : c.b_ns) require(n >= 1.0, "binomial.ns: must be at least 1");
  }
  {
    Section b(top.raw("bound"), "bound");
    c.bd_sigmas = b.list("sigmas", c.bd_sigmas);
    c.bd_alpha = b.get("alpha", c.bd_alpha);
    c.bd_b = b.get("b", c.bd_b);
    c.bd_c = b.get("c_delta", c.bd_c);
    for (double s : c.bd_sigmas) require(s > 0.0 && s < 1.0, "bound.sigmas: must lie in (0, 1)");
    require(c.bd_alpha > 0.0 && c.bd_b >= 0.0 && c.bd_c > 0.0, "bound: need alpha > 0, b >= 0, c_delta > 0");
  }
  {
    Section s(top.raw("sweep_eps"), "sweep_eps");
    c.eps = s.list("eps", c.eps);
    for (double e : c.eps) require(e >= 0.0, "sweep_eps.eps: must be non-negative");
  }
  require(c.threads >= 1, "threads: must be at least 1");
  return c;
}

// ---------------------------------------------------------------------------
// Output directory with a checksummed manifest
// ---------------------------------------------------------------------------

std::string sha256_file(const fs::path& p) {
  const std::string data = read_text(p);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw NumericalError("sha256 failed for " + p.string());
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

class Output {
 public:
  explicit Output(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }
  fs::path path(const std::string& rel) {
    files_.insert(rel);
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    return p;
  }
  fs::path dir(const std::string& rel) {
    fs::create_directories(root_ / rel);
    return root_ / rel;
  }
  void track_dir(const std::string& rel) {
    for (const auto& e : fs::recursive_directory_iterator(root_ / rel))
      if (e.is_regular_file()) files_.insert(fs::relative(e.path(), root_).generic_string());
  }
  void json(const std::string& rel, const Json& j) { write_json(path(rel), j); }
  void text(const std::string& rel, const std::string& s) { write_text(path(rel), s); }

  void manifest(const Json& header) {
    Json m = header;
    m["files"] = Json::array();
    for (const auto& f : files_) {
      const fs::path p = root_ / f;
      m["files"].push_back({{"path", f}, {"bytes", fs::file_size(p)}, {"sha256", sha256_file(p)}});
    }
    write_json(root_ / "manifest.json", m);
  }

 private:
  fs::path root_;
  std::set<std::string> files_;  // sorted for stable manifests
};

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

template <class F>
auto stage(const char* name, F&& f) {
  current_stage = name;
  std::cerr << "[bvm] " << name << "\n";
  return f();
}

struct Pipeline {
  Config cfg;
  Output& out;
  std::optional<SpectInstance> inst;
  std::optional<MapResult> map;
  std::optional<PluginApprox> pa;
  std::optional<ChainOutput> chain;

  SpectDeskConfig desk() const {
    SpectDeskConfig d = cfg.spect;
    d.seed = cfg.seed;
    d.threads = cfg.threads;
    return d;
  }

  void simulate() {
    stage("simulate", [&] {
      const auto d = desk();
      if (!cfg.instance.empty()) {
        inst = load_instance(cfg.instance, PriorSpec::flat(0));
        inst->prior = make_spect_prior(inst->geometry, d.prior);
      } else {
        inst = desk_instance(d);
      }
      save_instance(out.dir("instance"), *inst, Json{{"seed", cfg.seed}});
      out.track_dir("instance");
    });
  }

  void estimate() {
    if (!inst) simulate();
    stage("map", [&] {
      map = map_estimate(*inst, cfg.spect.map);
      write_dense_csv(out.path("map/theta.csv"), map->theta, {"theta"});
      out.json("map/summary.json", {{"iterations", map->iterations},
                                    {"objective", json_number(map->objective)},
                                    {"kkt_residual", json_number(map->kkt_residual)},
                                    {"converged", map->converged}});
    });
  }

  void approximate() {
    if (!map) estimate();
    stage("approx", [&] {
      pa = plugin_approx(*inst, map->theta, cfg.spect.plugin);
      out.json("approx/plugin.json", {{"sigma", pa->sigma},
                                      {"s0", pa->s0},
                                      {"s0_star", pa->s0_star},
                                      {"s1", pa->s1},
                                      {"zero_rays", pa->z_rows.size()},
                                      {"a_hat", to_json(pa->a_hat)},
                                      {"log_orthant", json_number(pa->log_orthant)},
                                      {"orthant_rel_error", json_number(pa->orthant_rel_error)}});
      write_dense_csv(out.path("approx/omega.csv"), pa->omega);
    });
  }

  void sample() {
    if (!pa) approximate();
    stage("mcmc", [&] {
      SpectTarget tgt(*inst, map->theta.cwiseMax(cfg.spect.start_floor));
      ChainConfig cc = cfg.spect.chain;
      cc.seed = cfg.seed + 1;
      std::mt19937_64 rng(cc.seed);
      chain = run_chain(tgt, cc, rng);
      if (cfg.chain_format == "csv")
        write_chain_csv(out.path("mcmc/chain.csv"), *chain);
      else
        write_chain_binary(out.path("mcmc/chain.bin"), chain->samples);
      const Index p = chain->samples.cols();
      Matrix s(p, 6);
      for (Index j = 0; j < p; ++j) {
        const Vector x = chain->samples.col(j);
        const double m = x.mean();
        s.row(j) << static_cast<double>(j), m, (x.array() - m).square().sum() / static_cast<double>(x.size() - 1),
            chain->ess[j], chain->acceptance[j], chain->steps[j];
      }
      write_dense_csv(out.path("mcmc/summary.csv"), s, {"pixel", "mean", "var", "ess", "acceptance", "step"});
    });
  }

  void compare() {
    if (!chain) sample();
    stage("compare", [&] {
      const auto tab = agreement_stats(*chain, *pa, inst->sigma());
      Json j = to_json(tab);
      out.json("compare/agreement.json", j);
      auto rows = [](const std::vector<AgreementRow>& v) {
        Matrix m(static_cast<Index>(v.size()), 4);
        for (std::size_t k = 0; k < v.size(); ++k)
          m.row(static_cast<Index>(k)) << static_cast<double>(v[k].pixel), v[k].predicted, v[k].observed, v[k].rel_error;
        return m;
      };
      // plot-ready: predicted vs observed scatter per block
      write_dense_csv(out.path("compare/agreement_s1.csv"), rows(tab.s1), {"pixel", "a_hat", "sigma2_over_mean", "rel_error"});
      write_dense_csv(out.path("compare/agreement_s0.csv"), rows(tab.s0),
                      {"pixel", "predicted_var", "mcmc_var", "rel_error"});
      // pixel maps: class 0 = S0 interior, 1 = S0 boundary, 2 = S1
      const auto& g = inst->geometry;
      Matrix px(g.pixels(), 8);
      std::vector<double> cls(static_cast<std::size_t>(g.pixels()), 0.0);
      for (Index j : pa->s0_star) cls[static_cast<std::size_t>(j)] = 1.0;
      for (Index j : pa->s1) cls[static_cast<std::size_t>(j)] = 2.0;
      for (Index r = 0; r < g.rows; ++r)
        for (Index c = 0; c < g.cols; ++c) {
          const Index j = g.pixel_index(r, c);
          const Vector x = chain->samples.col(j);
          const double m = x.mean();
          px.row(j) << static_cast<double>(r), static_cast<double>(c), cls[static_cast<std::size_t>(j)],
              inst->theta_true ? (*inst->theta_true)[j] : kNaN, map->theta[j], m,
              (x.array() - m).square().sum() / static_cast<double>(x.size() - 1), chain->ess[j];
        }
      write_dense_csv(out.path("compare/pixels.csv"), px,
                      {"row", "col", "class", "theta_true", "theta_map", "post_mean", "post_var", "ess"});
      std::cerr << "[bvm] S1 median rel error " << tab.s1_median << " (" << tab.s1.size() << " pixels), S0 median "
                << tab.s0_median << " (" << tab.s0.size() << " pixels)\n";
    });
  }

  void sweep_eps() {
    if (!map) estimate();
    stage("sweep-eps", [&] {
      Matrix t(static_cast<Index>(cfg.eps.size()), 5);
      for (std::size_t k = 0; k < cfg.eps.size(); ++k) {
        PluginOptions o = cfg.spect.plugin;
        o.eps = cfg.eps[k];
        const auto p = plugin_approx(*inst, map->theta, o);
        t.row(static_cast<Index>(k)) << cfg.eps[k], static_cast<double>(p.s0.size()),
            static_cast<double>(p.s0_star.size()), static_cast<double>(p.s1.size()),
            p.a_hat.size() ? p.a_hat.minCoeff() : kNaN;
      }
      write_dense_csv(out.path("sweep_eps.csv"), t, {"eps", "s0", "s0_star", "s1", "a_hat_min"});
    });
  }

  void poisson() {
    stage("poisson", [&] {
      const double beta = cfg.p_level;
      Matrix t(static_cast<Index>(cfg.p_alphas.size() * cfg.p_ns.size()), 6);
      Index r = 0;
      for (double alpha : cfg.p_alphas)
        for (double n : cfg.p_ns) {
          const double s = 1.0 / std::sqrt(n);
          const PoissonGLM m(Matrix::Ones(1, 1), Vector::Zero(1), s);
          const ParameterPoint ts{0.0};
          const auto part = classify(ts, m.limit_gradient(ts.values(), ts.values()));
          const auto lq = local_quadratic(m, PriorSpec::power_law(Vector::Constant(1, alpha)), part, ts);
          const auto ci = gamma_credible_interval(lq.alpha1[0], lq.a1[0], beta, s);
          auto exact = [=](double v) { return v <= 0.0 ? -kInf : (alpha - 1.0) * std::log(v / n) - v; };
          auto limit = [a = lq.alpha1[0], rate = lq.a1[0]](double v) { return gamma_log_pdf(v, a, rate); };
          const double tv = tv_quadrature_1d(exact, limit, 0.0, kInf).value;
          t.row(r++) << alpha, n, ci.lo, ci.hi, ci.hi * n, tv;
        }
      write_dense_csv(out.path("poisson_ci.csv"), t, {"alpha", "n", "lo", "hi", "n_times_hi", "tv_exact_vs_limit"});
    });
  }

  void binomial() {
    stage("binomial", [&] {
      Matrix t(static_cast<Index>(cfg.b_ns.size()), 4);
      const Vector om = Eigen::Map<const Vector>(cfg.b_omega.data(), 2);
      for (std::size_t k = 0; k < cfg.b_ns.size(); ++k) {
        const auto c = binomial_boundary_tv(cfg.b_ns[k], cfg.b_alpha, cfg.b_theta1, om);
        t.row(static_cast<Index>(k)) << c.n, c.a1, c.tv.value, c.tv.error;
      }
      write_dense_csv(out.path("binomial_tv.csv"), t, {"n", "a1", "tv", "tv_error"});
    });
  }

  void bound() {
    stage("bound", [&] {
      Matrix t(static_cast<Index>(cfg.bd_sigmas.size()), 9);
      Json reps = Json::array();
      for (std::size_t k = 0; k < cfg.bd_sigmas.size(); ++k) {
        const auto c = poisson_bound_case(cfg.bd_sigmas[k], cfg.bd_alpha, cfg.bd_b, cfg.bd_c);
        const auto& r = c.report;
        t.row(static_cast<Index>(k)) << c.sigma, c.delta1, r.total, r.total_additive, c.tv_exact, r.term_gamma,
            r.term_ptn, r.term_prior, r.admissible ? 1.0 : 0.0;
        Json j = to_json(r);
        j["sigma"] = c.sigma;
        reps.push_back(j);
      }
      write_dense_csv(out.path("bound.csv"), t,
                      {"sigma", "delta1", "bound", "bound_additive", "tv_exact", "term_gamma", "term_ptn", "term_prior",
                       "admissible"});
      out.json("bound.json", reps);
    });
  }

  void run() {
    if (cfg.experiment == "poisson") return poisson();
    if (cfg.experiment == "binomial") return binomial();
    if (cfg.experiment == "bound") return bound();
    compare();
  }
};

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const IoError*>(&e)) return 2;
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bvm: posterior approximations at the parameter-space boundary"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "bvm_out", preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"simulate", "simulate a SPECT instance"},
      {"map", "MAP estimate under the configured prior"},
      {"approx", "plug-in boundary approximation at the MAP"},
      {"mcmc", "posterior chain started at the MAP"},
      {"compare", "chain moments against the plug-in predictions"},
      {"bound", "nonasymptotic TV bound on the 1-D Poisson instance"},
      {"sweep-eps", "sensitivity of the S1 classification to its threshold"},
      {"run", "full pipeline for the configured experiment"},
      {"presets", "list presets, or run the one named by --preset"}};
  for (const auto& [name, help] : commands) {
    auto* sc = app.add_subcommand(name, help);
    sc->add_option("--config", config_path, "YAML or JSON config file");
    sc->add_option("--seed", seed, "override the config seed");
    sc->add_option("--out", out_dir, "output directory")->capture_default_str();
    sc->add_option("--preset", preset, "start from a built-in preset");
    sc->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  if (cmd == "presets" && preset.empty()) {
    for (const auto& [name, text] : presets()) std::cout << name << "\n";
    return 0;
  }
  try {
    Json doc = Json::object();
    if (!preset.empty()) {
      const auto it = presets().find(preset);
      if (it == presets().end()) throw ConfigError("unknown preset '" + preset + "' (see `bvm presets`)");
      doc = parse_document(it->second, "preset " + preset);
    }
    if (!config_path.empty()) {
      const Json user = load_document(config_path);
      if (!user.is_null() && !user.is_object()) throw ConfigError(config_path + ": top level must be a mapping");
      if (user.is_object()) doc.merge_patch(user);
    }
    if (seed) doc["seed"] = *seed;
    if (threads) doc["threads"] = *threads;
    Config cfg = parse_config(doc);
    const bool spect_cmd = cmd != "bound" && cmd != "run" && cmd != "presets";
    if (spect_cmd && cfg.experiment != "spect")
      throw ConfigError("`" + cmd + "` needs experiment: spect (got " + cfg.experiment + ")");

    Output out(out_dir);
    Json recorded = doc;  // thread count does not change results, so it stays out of the digested files
    recorded.erase("threads");
    out.json("config.json", recorded);
    Pipeline pl{cfg, out, {}, {}, {}, {}};
    if (cmd == "simulate") pl.simulate();
    else if (cmd == "map") pl.estimate();
    else if (cmd == "approx") pl.approximate();
    else if (cmd == "mcmc") pl.sample();
    else if (cmd == "compare") pl.compare();
    else if (cmd == "sweep-eps") pl.sweep_eps();
    else if (cmd == "bound") pl.bound();
    else pl.run();

    current_stage = "manifest";
    out.manifest({{"tool", "bvm"},
                  {"version", BVM_VERSION},
                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)},
                  {"command", cmd},
                  {"preset", preset},
                  {"experiment", cfg.experiment},
                  {"seed", cfg.seed},
                  {"threads", cfg.threads}});
    std::cerr << "[bvm] wrote " << fs::absolute(out_dir).string() << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "bvm: stage '" << current_stage << "' failed: " << e.what() << "\n";
    return exit_code_for(e);
  }
}
