#pragma once

#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/KroneckerProduct>

namespace cavcool {

using cplx = std::complex<double>;
using Index = Eigen::Index;

using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using SpMat = Eigen::SparseMatrix<cplx>;
using Triplet = Eigen::Triplet<cplx>;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

inline constexpr const char* version_string = "0.1.0";

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

/// Identity of dimension `dim` as a sparse matrix.
inline SpMat sparse_identity(Index dim) {
  SpMat id(dim, dim);
  id.setIdentity();
  return id;
}

/// Kronecker product of two sparse matrices, A ⊗ B.
inline SpMat kron(const SpMat& a, const SpMat& b) {
  SpMat out = Eigen::kroneckerProduct(a, b);
  out.makeCompressed();
  return out;
}

/// Frobenius norm of a sparse matrix.
inline double frobenius(const SpMat& m) { return m.norm(); }

}  // namespace cavcool
