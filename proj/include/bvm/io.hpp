#pragma once
// Serialization: JSON reports, CSV tables, binary chain store, SPECT instance directories.

#include "bvm/boundary.hpp"
#include "bvm/diagnostics.hpp"
#include "bvm/mcmc.hpp"
#include "bvm/spect.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace bvm {

struct IoError : Error {
  using Error::Error;
};

using Json = nlohmann::ordered_json;

// Shortest decimal that parses back to the same double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
  if (s == "nan") return kNaN;
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw IoError("cannot parse number '" + std::string(s) + "'");
  return v;
}

// JSON has no infinities; non-finite values become null.
inline Json json_number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(json_number(v[i]));
  return a;
}

inline Json to_json(const Matrix& m) {
  Json a = Json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Vector(m.row(i).transpose())));
  return a;
}

inline Json to_json(const IndexList& l) { return Json(l); }

inline Vector vector_from_json(const Json& j) {
  if (!j.is_array()) throw IoError("expected a JSON array of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = j[i].is_null() ? kNaN : j[i].get<double>();
  return v;
}

inline Json to_json(const BoundaryPartition& p) {
  return Json{{"s0_interior", p.s0_interior}, {"s0_boundary", p.s0_boundary}, {"s1", p.s1},
              {"order", p.order},             {"eps_grad", p.eps_grad}};
}

inline BoundaryPartition partition_from_json(const Json& j) {
  BoundaryPartition p;
  p.s0_interior = j.at("s0_interior").get<IndexList>();
  p.s0_boundary = j.at("s0_boundary").get<IndexList>();
  p.s1 = j.at("s1").get<IndexList>();
  p.order = j.at("order").get<IndexList>();
  p.eps_grad = j.at("eps_grad").get<double>();
  return p;
}

inline Json to_json(const LocalQuadratic& q) {
  return Json{{"omega", to_json(q.omega)}, {"a0", to_json(q.a0)},         {"a1", to_json(q.a1)},
              {"alpha0", to_json(q.alpha0)}, {"alpha1", to_json(q.alpha1)}, {"sigma", q.sigma}};
}

inline LocalQuadratic local_quadratic_from_json(const Json& j) {
  LocalQuadratic q;
  const Json& om = j.at("omega");
  const auto n = static_cast<Index>(om.size());
  q.omega.resize(n, n);
  for (Index r = 0; r < n; ++r) q.omega.row(r) = vector_from_json(om[static_cast<std::size_t>(r)]).transpose();
  q.a0 = vector_from_json(j.at("a0"));
  q.a1 = vector_from_json(j.at("a1"));
  q.alpha0 = vector_from_json(j.at("alpha0"));
  q.alpha1 = vector_from_json(j.at("alpha1"));
  q.sigma = j.at("sigma").get<double>();
  return q;
}

inline Json to_json(const BoundReport& r) {
  Json f{{"dstar1_below_amin", r.flags.dstar1_below_amin}, {"dstar0_below_lambda", r.flags.dstar0_below_lambda},
         {"delta0_below_norm", r.flags.delta0_below_norm}, {"delta0_below_c0", r.flags.delta0_below_c0},
         {"delta1_below_c1", r.flags.delta1_below_c1},     {"a0_inside", r.flags.a0_inside}};
  return Json{{"admissible", r.admissible},
              {"flags", f},
              {"term_gamma", json_number(r.term_gamma)},
              {"term_ptn", json_number(r.term_ptn)},
              {"term_prior", json_number(r.term_prior)},
              {"term_consistency", json_number(r.term_consistency)},
              {"total", json_number(r.total)},
              {"total_additive", json_number(r.total_additive)},
              {"C0", json_number(r.C0)},
              {"C1", json_number(r.C1)},
              {"C2", json_number(r.C2)},
              {"C_Delta", json_number(r.C_Delta)},
              {"C_A", json_number(r.C_A)},
              {"C_alpha0", json_number(r.C_alpha0)},
              {"E_Phi", json_number(r.E_Phi)},
              {"p_alpha0", json_number(r.p_alpha0)},
              {"gamma_tail_max", json_number(r.gamma_tail_max)},
              {"ptn_tail", json_number(r.ptn_tail)},
              {"mc_rel_error", json_number(r.mc_rel_error)}};
}

inline Json to_json(const AgreementTable& t) {
  auto rows = [](const std::vector<AgreementRow>& v) {
    Json a = Json::array();
    for (const auto& r : v)
      a.push_back({{"pixel", r.pixel}, {"predicted", r.predicted}, {"observed", r.observed}, {"rel_error", r.rel_error}});
    return a;
  };
  return Json{{"s1", rows(t.s1)},
              {"s0", rows(t.s0)},
              {"s1_median", json_number(t.s1_median)},
              {"s1_p90", json_number(t.s1_p90)},
              {"s0_median", json_number(t.s0_median)},
              {"s0_p90", json_number(t.s0_p90)}};
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline Json read_json(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i)
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  return out;
}

inline std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace detail

// Dense matrix or vector; optional header row of column names.
inline std::string dense_csv(const Matrix& m, const std::vector<std::string>& header = {}) {
  std::string s;
  if (!header.empty()) {
    if (static_cast<Index>(header.size()) != m.cols()) throw DimensionError("dense_csv: header width mismatch");
    for (std::size_t k = 0; k < header.size(); ++k) s += (k ? "," : "") + header[k];
    s += '\n';
  }
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) s += ',';
      s += format_double(m(i, j));
    }
    s += '\n';
  }
  return s;
}

inline void write_dense_csv(const std::filesystem::path& path, const Matrix& m, const std::vector<std::string>& header = {}) {
  write_text(path, dense_csv(m, header));
}

inline Matrix read_dense_csv(const std::filesystem::path& path, bool has_header = false) {
  const auto lines = detail::lines_of(read_text(path));
  std::size_t first = has_header ? 1 : 0;
  if (lines.size() <= first) return Matrix(0, 0);
  const auto width = detail::split_csv(lines[first]).size();
  Matrix m(static_cast<Index>(lines.size() - first), static_cast<Index>(width));
  for (std::size_t r = first; r < lines.size(); ++r) {
    const auto cells = detail::split_csv(lines[r]);
    if (cells.size() != width) throw IoError(path.string() + ": ragged row " + std::to_string(r + 1));
    for (std::size_t c = 0; c < width; ++c) m(static_cast<Index>(r - first), static_cast<Index>(c)) = parse_double(cells[c]);
  }
  return m;
}

// Sparse matrix as "row,col,value" triplets with a "rows,cols,nnz" header line.
inline void write_triplet_csv(const std::filesystem::path& path, const SparseMatrix& A) {
  std::string s = std::to_string(A.rows()) + "," + std::to_string(A.cols()) + "," + std::to_string(A.nonZeros()) + "\n";
  for (Index j = 0; j < A.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(A, j); it; ++it)
      s += std::to_string(it.row()) + "," + std::to_string(it.col()) + "," + format_double(it.value()) + "\n";
  write_text(path, s);
}

inline SparseMatrix read_triplet_csv(const std::filesystem::path& path) {
  const auto lines = detail::lines_of(read_text(path));
  if (lines.empty()) throw IoError(path.string() + ": missing header");
  const auto head = detail::split_csv(lines[0]);
  if (head.size() != 3) throw IoError(path.string() + ": header must be rows,cols,nnz");
  const auto rows = static_cast<Index>(parse_double(head[0])), cols = static_cast<Index>(parse_double(head[1]));
  const auto nnz = static_cast<std::size_t>(parse_double(head[2]));
  if (lines.size() != nnz + 1) throw IoError(path.string() + ": triplet count does not match header");
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(nnz);
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto c = detail::split_csv(lines[k]);
    if (c.size() != 3) throw IoError(path.string() + ": bad triplet on line " + std::to_string(k + 1));
    const auto i = static_cast<Index>(parse_double(c[0])), j = static_cast<Index>(parse_double(c[1]));
    if (i < 0 || i >= rows || j < 0 || j >= cols) throw IoError(path.string() + ": index out of range");
    t.emplace_back(i, j, parse_double(c[2]));
  }
  SparseMatrix A(rows, cols);
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

// Kept samples with a theta_j header.
inline void write_chain_csv(const std::filesystem::path& path, const ChainOutput& c) {
  std::vector<std::string> h;
  for (Index j = 0; j < c.samples.cols(); ++j) h.push_back("theta_" + std::to_string(j));
  write_dense_csv(path, c.samples, h);
}

// Binary column store: "BVMCHAIN", uint64 rows, uint64 cols, column-major doubles (little endian host).
inline constexpr char kChainMagic[8] = {'B', 'V', 'M', 'C', 'H', 'A', 'I', 'N'};

inline void write_chain_binary(const std::filesystem::path& path, const Matrix& samples) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::uint64_t r = static_cast<std::uint64_t>(samples.rows()), c = static_cast<std::uint64_t>(samples.cols());
  out.write(kChainMagic, 8);
  out.write(reinterpret_cast<const char*>(&r), 8);
  out.write(reinterpret_cast<const char*>(&c), 8);
  out.write(reinterpret_cast<const char*>(samples.data()), static_cast<std::streamsize>(r * c * sizeof(double)));
  if (!out) throw IoError("write failed for " + path.string());
}

inline Matrix read_chain_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  std::uint64_t r = 0, c = 0;
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kChainMagic, 8) != 0) throw IoError(path.string() + ": not a chain file");
  in.read(reinterpret_cast<char*>(&r), 8);
  in.read(reinterpret_cast<char*>(&c), 8);
  if (!in) throw IoError(path.string() + ": truncated header");
  const auto expected = 24 + r * c * sizeof(double);
  if (std::filesystem::file_size(path) != expected) throw IoError(path.string() + ": size does not match header");
  Matrix m(static_cast<Index>(r), static_cast<Index>(c));
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(r * c * sizeof(double)));
  if (!in) throw IoError(path.string() + ": truncated data");
  return m;
}

// ---------------------------------------------------------------------------
// SPECT instance directory: geometry.json, A.csv, counts.csv, theta_true.csv
// ---------------------------------------------------------------------------

inline Json to_json(const SpectGeometry& g) {
  return Json{{"rows", g.rows},
              {"cols", g.cols},
              {"pixel_size", g.pixel_size},
              {"projections", g.projections},
              {"bins", g.bins},
              {"bin_width", g.bin_width},
              {"arc", g.arc},
              {"attenuation", g.attenuation},
              {"body_radius", g.body_radius},
              {"decay", g.decay},
              {"exposure", g.exposure}};
}

inline SpectGeometry geometry_from_json(const Json& j) {
  SpectGeometry g;
  auto get = [&](const char* k, auto& field) {
    if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
  };
  get("rows", g.rows);
  get("cols", g.cols);
  get("pixel_size", g.pixel_size);
  get("projections", g.projections);
  get("bins", g.bins);
  get("bin_width", g.bin_width);
  get("arc", g.arc);
  get("attenuation", g.attenuation);
  get("body_radius", g.body_radius);
  get("decay", g.decay);
  get("exposure", g.exposure);
  for (const auto& [k, v] : j.items()) {
    static const char* known[] = {"rows", "cols", "pixel_size", "projections", "bins", "bin_width",
                                  "arc", "attenuation", "body_radius", "decay", "exposure"};
    if (std::none_of(std::begin(known), std::end(known), [&](const char* s) { return k == s; }))
      throw ConfigError("geometry: unknown key '" + k + "'");
  }
  g.validate();
  return g;
}

inline void save_instance(const std::filesystem::path& dir, const SpectInstance& inst, const Json& meta = Json::object()) {
  std::filesystem::create_directories(dir);
  write_json(dir / "geometry.json", to_json(inst.geometry));
  write_triplet_csv(dir / "A.csv", inst.A);
  write_dense_csv(dir / "counts.csv", inst.counts, {"count"});
  if (inst.theta_true) write_dense_csv(dir / "theta_true.csv", *inst.theta_true, {"theta"});
  write_json(dir / "meta.json", meta);
}

inline SpectInstance load_instance(const std::filesystem::path& dir, PriorSpec prior) {
  SpectInstance inst;
  inst.geometry = geometry_from_json(read_json(dir / "geometry.json"));
  inst.A = read_triplet_csv(dir / "A.csv");
  const Matrix c = read_dense_csv(dir / "counts.csv", true);
  if (c.cols() != 1 || c.rows() != inst.A.rows()) throw IoError(dir.string() + ": counts do not match A");
  inst.counts = c.col(0);
  inst.y = inst.counts / inst.geometry.exposure;
  if (std::filesystem::exists(dir / "theta_true.csv")) {
    const Matrix t = read_dense_csv(dir / "theta_true.csv", true);
    if (t.rows() != inst.A.cols()) throw IoError(dir.string() + ": phantom does not match A");
    inst.theta_true = Vector(t.col(0));
  }
  require_dim(prior.dimension(), inst.A.cols(), "load_instance prior");
  inst.prior = std::move(prior);
  return inst;
}

}  // namespace bvm
