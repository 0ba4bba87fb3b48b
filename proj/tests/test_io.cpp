#include "bvm/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace bvm;
namespace fs = std::filesystem;

namespace {

std::vector<fs::path>& scratch_dirs() {
  static std::vector<fs::path> dirs;
  return dirs;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bvm_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  scratch_dirs().push_back(p);
  return p;
}

struct ScratchCleanup : ::testing::Environment {
  void TearDown() override {
    for (const auto& p : scratch_dirs()) fs::remove_all(p);
  }
};

const auto* const cleanup = ::testing::AddGlobalTestEnvironment(new ScratchCleanup);

}  // namespace

TEST(Format, ShortestRoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double x = u(rng) * std::pow(10.0, static_cast<int>(rng() % 60) - 30);
    EXPECT_EQ(parse_double(format_double(x)), x);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_TRUE(std::isnan(parse_double("nan")));
  EXPECT_EQ(parse_double(" -inf\r"), -kInf);
  EXPECT_THROW(parse_double("1.0x"), IoError);
  EXPECT_THROW(parse_double(""), IoError);
}

TEST(Csv, DenseRoundTripWithHeader) {
  const auto dir = scratch("dense");
  Matrix m(3, 2);
  m << 1.0 / 3.0, -2e-300, kInf, 7.0, 0.0, 1e17;
  write_dense_csv(dir / "m.csv", m, {"a", "b"});
  const Matrix r = read_dense_csv(dir / "m.csv", true);
  ASSERT_EQ(r.rows(), 3);
  ASSERT_EQ(r.cols(), 2);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 2; ++j) EXPECT_EQ(r(i, j), m(i, j));
  EXPECT_THROW(write_dense_csv(dir / "x.csv", m, {"a"}), DimensionError);
}

TEST(Csv, RaggedRowsRejected) {
  const auto dir = scratch("ragged");
  write_text(dir / "r.csv", "1,2\n3\n");
  EXPECT_THROW(read_dense_csv(dir / "r.csv"), IoError);
  EXPECT_THROW(read_dense_csv(dir / "missing.csv"), IoError);
}

TEST(Csv, TripletRoundTripIsExact) {
  const auto dir = scratch("triplet");
  SpectGeometry g;
  g.rows = g.cols = 6;
  g.projections = 8;
  g.bins = 9;
  g.arc = kPi;
  g.attenuation = 0.1;
  const SparseMatrix A = build_system_matrix(g);
  write_triplet_csv(dir / "A.csv", A);
  const SparseMatrix B = read_triplet_csv(dir / "A.csv");
  ASSERT_EQ(B.rows(), A.rows());
  ASSERT_EQ(B.cols(), A.cols());
  EXPECT_EQ(B.nonZeros(), A.nonZeros());
  EXPECT_EQ((Matrix(A) - Matrix(B)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Csv, TripletErrors) {
  const auto dir = scratch("triplet_err");
  write_text(dir / "a.csv", "2,2,1\n5,0,1.0\n");
  EXPECT_THROW(read_triplet_csv(dir / "a.csv"), IoError);
  write_text(dir / "b.csv", "2,2,2\n0,0,1.0\n");
  EXPECT_THROW(read_triplet_csv(dir / "b.csv"), IoError);
  write_text(dir / "c.csv", "2,2\n");
  EXPECT_THROW(read_triplet_csv(dir / "c.csv"), IoError);
}

TEST(Chain, BinaryRoundTrip) {
  const auto dir = scratch("chain");
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  Matrix s(257, 5);
  for (Index i = 0; i < s.size(); ++i) s.data()[i] = z(rng);
  write_chain_binary(dir / "c.bin", s);
  EXPECT_EQ(fs::file_size(dir / "c.bin"), 24u + 257u * 5u * 8u);
  const Matrix r = read_chain_binary(dir / "c.bin");
  EXPECT_EQ((r - s).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Chain, BinaryCorruptionDetected) {
  const auto dir = scratch("chain_bad");
  write_chain_binary(dir / "c.bin", Matrix::Ones(4, 2));
  fs::resize_file(dir / "c.bin", 24 + 7 * 8);
  EXPECT_THROW(read_chain_binary(dir / "c.bin"), IoError);
  write_text(dir / "d.bin", "NOTCHAIN0000000000000000");
  EXPECT_THROW(read_chain_binary(dir / "d.bin"), IoError);
}

TEST(Chain, CsvHasNamedColumns) {
  const auto dir = scratch("chain_csv");
  ChainOutput c;
  c.samples = Matrix::Constant(3, 2, 0.25);
  write_chain_csv(dir / "c.csv", c);
  EXPECT_EQ(read_text(dir / "c.csv").substr(0, 16), "theta_0,theta_1\n");
  EXPECT_EQ(read_dense_csv(dir / "c.csv", true), c.samples);
}

TEST(Json, PartitionAndQuadraticRoundTrip) {
  BoundaryPartition p;
  p.s0_interior = {0, 3};
  p.s0_boundary = {2};
  p.s1 = {1};
  p.order = {0, 3, 2, 1};
  p.eps_grad = 1e-9;
  const auto q = partition_from_json(Json::parse(to_json(p).dump()));
  EXPECT_EQ(q.order, p.order);
  EXPECT_EQ(q.s1, p.s1);
  EXPECT_EQ(q.s0_boundary, p.s0_boundary);
  EXPECT_EQ(q.eps_grad, p.eps_grad);

  LocalQuadratic lq;
  lq.omega = (Matrix(2, 2) << 2.0, 0.3, 0.3, 1.0 / 7.0).finished();
  lq.a0 = Vector::Constant(2, -0.1);
  lq.a1 = Vector::Constant(1, 0.5);
  lq.alpha0 = Vector::Constant(2, 1.0);
  lq.alpha1 = Vector::Constant(1, 0.5);
  lq.sigma = 0.03;
  const auto r = local_quadratic_from_json(Json::parse(to_json(lq).dump()));
  EXPECT_EQ(r.omega, lq.omega);
  EXPECT_EQ(r.a1, lq.a1);
  EXPECT_EQ(r.sigma, lq.sigma);
}

TEST(Json, NonFiniteBecomesNull) {
  BoundReport rep;
  rep.total = kInf;
  rep.term_gamma = 0.125;
  const Json j = to_json(rep);
  EXPECT_TRUE(j.at("total").is_null());
  EXPECT_EQ(j.at("term_gamma").get<double>(), 0.125);
  EXPECT_TRUE(std::isnan(vector_from_json(Json::parse("[null, 1]"))[0]));
}

TEST(Json, GeometryRejectsUnknownKeys) {
  SpectGeometry g;
  g.attenuation = 0.1;
  const auto h = geometry_from_json(to_json(g));
  EXPECT_EQ(h.attenuation, 0.1);
  EXPECT_EQ(h.rows, g.rows);
  Json bad = to_json(g);
  bad["pixles"] = 3;
  EXPECT_THROW(geometry_from_json(bad), ConfigError);
  EXPECT_THROW(read_json("/nonexistent/x.json"), IoError);
}

TEST(Instance, DirectoryRoundTrip) {
  const auto dir = scratch("instance");
  SpectGeometry g;
  g.rows = g.cols = 6;
  g.projections = 12;
  g.bins = 9;
  g.arc = kPi;
  const SparseMatrix A = build_system_matrix(g);
  const Vector theta = make_phantom(g, DiskPhantom{});
  const PriorSpec prior = PriorSpec::flat(g.pixels());
  std::mt19937_64 rng(4);
  const auto inst = simulate(g, A, theta, prior, rng);
  save_instance(dir, inst, Json{{"seed", 4}});
  const auto back = load_instance(dir, prior);
  EXPECT_EQ(back.counts, inst.counts);
  EXPECT_EQ(back.y, inst.y);
  ASSERT_TRUE(back.theta_true.has_value());
  EXPECT_EQ(*back.theta_true, theta);
  EXPECT_EQ((Matrix(back.A) - Matrix(A)).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(read_json(dir / "meta.json").at("seed").get<int>(), 4);
  EXPECT_THROW(load_instance(dir, PriorSpec::flat(3)), DimensionError);
}
