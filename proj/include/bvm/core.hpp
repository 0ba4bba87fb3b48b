#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace bvm {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;
using IndexList = std::vector<Index>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kPi = 3.14159265358979323846;

// Error hierarchy. Each class maps onto one failure category so callers
// (notably the CLI) can translate them into exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : Error {
  using Error::Error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct UnsupportedError : Error {
  using Error::Error;
};
struct SingularInformationError : Error {
  using Error::Error;
};
struct NonConvergenceError : Error {
  using Error::Error;
};
struct ParameterRegimeError : Error {
  using Error::Error;
};
struct GeometryError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct DiagnosticError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

inline void require_dim(Index got, Index want, const char* what) {
  if (got != want)
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) +
                         ", got " + std::to_string(got));
}

// Nonnegative parameter vector.
class ParameterPoint {
 public:
  ParameterPoint() = default;
  explicit ParameterPoint(Vector values) : values_(std::move(values)) {
    for (Index j = 0; j < values_.size(); ++j) {
      if (!(values_[j] >= 0.0))
        throw DomainError("parameter coordinate " + std::to_string(j) + " is negative or NaN");
    }
  }
  ParameterPoint(std::initializer_list<double> v) : ParameterPoint(from_list(v)) {}

  const Vector& values() const { return values_; }
  Index dimension() const { return values_.size(); }
  double operator[](Index j) const { return values_[j]; }
  bool on_boundary(Index j) const { return values_[j] == 0.0; }

 private:
  static Vector from_list(std::initializer_list<double> v) {
    Vector out(static_cast<Index>(v.size()));
    Index k = 0;
    for (double x : v) out[k++] = x;
    return out;
  }
  Vector values_;
};

inline Vector gather(const Vector& x, const IndexList& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Index>(k)] = x[idx[k]];
  return out;
}

inline Matrix gather(const Matrix& m, const IndexList& rows, const IndexList& cols) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      out(static_cast<Index>(r), static_cast<Index>(c)) = m(rows[r], cols[c]);
  return out;
}

// log(x) with the convention log(0) = -inf, used by density kernels.
inline double safe_log(double x) { return x > 0.0 ? std::log(x) : -kInf; }

// Numerically stable log(exp(a) + exp(b)).
inline double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace bvm
