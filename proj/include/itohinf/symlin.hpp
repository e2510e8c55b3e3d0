#pragma once

// Symmetric-matrix coordinates and the generalized Lyapunov operator
//
//   L_{A,A1}(X) = X A + A^T X + A1^T X A1
//
// expressed on the n(n+1)/2-dimensional space of symmetric matrices.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>

#include "itohinf/errors.hpp"

namespace itohinf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kSqrt2 = 1.41421356237309504880;

/// Number of free entries of an n x n symmetric matrix.
constexpr Index triangular_dim(Index n) { return n * (n + 1) / 2; }

/// Inverse of triangular_dim; empty when k is not a triangular number.
inline std::optional<Index> dim_from_triangular(Index k) {
  if (k < 1) return std::nullopt;
  const auto n = static_cast<Index>(std::llround((std::sqrt(8.0 * static_cast<double>(k) + 1.0) - 1.0) / 2.0));
  if (triangular_dim(n) != k) return std::nullopt;
  return n;
}

/// Symmetric n x n matrix. Input is symmetrized on construction, so entries(i,k)
/// and entries(k,i) are always bitwise equal.
class SymMat {
 public:
  SymMat() = default;

  explicit SymMat(const Eigen::Ref<const Matrix>& m) {
    if (m.rows() != m.cols()) {
      throw DimensionError("SymMat: matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                           ", expected square");
    }
    m_ = 0.5 * (m + m.transpose());
  }

  static SymMat zero(Index n) { return SymMat(Matrix::Zero(n, n)); }
  static SymMat identity(Index n) { return SymMat(Matrix::Identity(n, n)); }

  Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  double operator()(Index i, Index k) const { return m_(i, k); }

  /// Frobenius norm.
  double norm() const { return m_.norm(); }

  friend SymMat operator+(const SymMat& a, const SymMat& b) { return SymMat(a.m_ + b.m_); }
  friend SymMat operator-(const SymMat& a, const SymMat& b) { return SymMat(a.m_ - b.m_); }
  friend SymMat operator*(double s, const SymMat& a) { return SymMat(s * a.m_); }
  SymMat operator-() const { return SymMat(-m_); }

 private:
  Matrix m_;
};

/// Stacks the upper triangle row by row, (1,1),(1,2),...,(1,n),(2,2),...,(n,n),
/// scaling off-diagonal entries by sqrt(2). The map is an isometry from the
/// Frobenius norm to the Euclidean norm.
inline Vector vecs(const SymMat& s) {
  const Index n = s.dim();
  Vector v(triangular_dim(n));
  Index k = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) v(k++) = (i == j) ? s(i, j) : kSqrt2 * s(i, j);
  }
  return v;
}

inline SymMat vecs_inv(const Eigen::Ref<const Vector>& v) {
  const auto n_opt = dim_from_triangular(v.size());
  if (!n_opt) {
    throw DimensionError("vecs_inv: length " + std::to_string(v.size()) + " is not a triangular number");
  }
  const Index n = *n_opt;
  Matrix m(n, n);
  Index k = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      const double value = (i == j) ? v(k) : v(k) / kSqrt2;
      m(i, j) = value;
      m(j, i) = value;
      ++k;
    }
  }
  return SymMat(m);
}

/// vecs(x x^T), computed without forming the outer product.
inline Vector xtilde(const Eigen::Ref<const Vector>& x) {
  const Index n = x.size();
  Vector v(triangular_dim(n));
  Index k = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) v(k++) = (i == j) ? x(i) * x(i) : kSqrt2 * x(i) * x(j);
  }
  return v;
}

/// Diagonal of the map taking plain upper-triangle coordinates to vecs
/// coordinates: 1 at diagonal positions, sqrt(2) elsewhere.
inline Vector vecs_scaling(Index n) {
  Vector d(triangular_dim(n));
  Index k = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) d(k++) = (i == j) ? 1.0 : kSqrt2;
  }
  return d;
}

/// Duplication-type matrix whose columns are vec(E_ij) for i <= j, where E_ij
/// has ones at (i,j) and (j,i). For symmetric X with plain upper-triangle
/// coordinates u, vec(X) = H u.
struct HRep {
  Index dim = 0;
  Matrix H;
};

inline HRep build_hrep(Index n) {
  if (n < 1) throw DimensionError("build_hrep: dimension must be positive");
  HRep h{n, Matrix::Zero(n * n, triangular_dim(n))};
  Index col = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      // column-major vec: entry (r,c) sits at r + c*n
      h.H(i + j * n, col) = 1.0;
      h.H(j + i * n, col) = 1.0;
      ++col;
    }
  }
  return h;
}

/// Drift / diffusion coefficient pair defining L_{A,A1}.
class LyapPencil {
 public:
  LyapPencil(Matrix a, Matrix a1) : a_(std::move(a)), a1_(std::move(a1)) {
    if (a_.rows() != a_.cols() || a1_.rows() != a1_.cols() || a_.rows() != a1_.rows()) {
      throw DimensionError("LyapPencil: A is " + std::to_string(a_.rows()) + "x" + std::to_string(a_.cols()) +
                           ", A1 is " + std::to_string(a1_.rows()) + "x" + std::to_string(a1_.cols()));
    }
  }

  Index dim() const { return a_.rows(); }
  const Matrix& A() const { return a_; }
  const Matrix& A1() const { return a1_; }

 private:
  Matrix a_;
  Matrix a1_;
};

inline SymMat lyap_apply(const LyapPencil& p, const SymMat& x) {
  if (x.dim() != p.dim()) throw DimensionError("lyap_apply: X dimension does not match pencil");
  const Matrix& X = x.matrix();
  return SymMat(X * p.A() + p.A().transpose() * X + p.A1().transpose() * X * p.A1());
}

/// (H^T H)^{-1} H^T (A (x) I + I (x) A + A1 (x) A1)^T H, the Lyapunov operator in
/// plain upper-triangle coordinates. Each column K H e_c is evaluated as
/// vec(L(E_ij)) instead of forming the n^2 x n^2 Kronecker matrix.
inline Matrix hcal_matrix(const LyapPencil& p, const HRep& h) {
  const Index n = p.dim();
  if (h.dim != n) throw DimensionError("hcal_matrix: HRep dimension does not match pencil");
  const Index d = triangular_dim(n);
  Matrix kh(n * n, d);
  for (Index c = 0; c < d; ++c) {
    const Matrix e = h.H.col(c).reshaped(n, n);
    const Matrix image = e * p.A() + p.A().transpose() * e + p.A1().transpose() * e * p.A1();
    kh.col(c) = image.reshaped();
  }
  const Vector inv_gram = h.H.colwise().squaredNorm().transpose().cwiseInverse();
  return inv_gram.asDiagonal() * (h.H.transpose() * kh);
}

inline Matrix hcal_matrix(const LyapPencil& p) { return hcal_matrix(p, build_hrep(p.dim())); }

/// The same operator in vecs coordinates: D hcal D^{-1}. Orthogonally similar to
/// L_{A,A1} under the Frobenius inner product.
inline Matrix hcal_vecs_matrix(const LyapPencil& p) {
  const Vector d = vecs_scaling(p.dim());
  return d.asDiagonal() * hcal_matrix(p) * d.cwiseInverse().asDiagonal();
}

/// Spectrum of L_{A,A1} restricted to symmetric matrices.
inline Eigen::VectorXcd ms_spectrum(const LyapPencil& p) {
  Eigen::EigenSolver<Matrix> es(hcal_matrix(p), /*computeEigenvectors=*/false);
  return es.eigenvalues();
}

inline double spectral_abscissa(const LyapPencil& p) { return ms_spectrum(p).real().maxCoeff(); }

/// Mean-square stability of dx = A x dt + A1 x dW.
inline bool is_ms_stable(const LyapPencil& p) { return spectral_abscissa(p) < 0.0; }

/// Relative threshold below which hcal is treated as singular.
inline constexpr double kSingularTolerance = 1e-12;

/// Solves X A + A^T X + A1^T X A1 = Y for symmetric X.
///
/// hcal acts on plain upper-triangle coordinates, so vecs(Y) is unscaled by D^{-1}
/// before the solve and the result rescaled by D before vecs_inv.
inline SymMat solve_gle(const LyapPencil& p, const SymMat& y) {
  if (y.dim() != p.dim()) throw DimensionError("solve_gle: Y dimension does not match pencil");
  const Matrix hc = hcal_matrix(p);
  Eigen::JacobiSVD<Matrix> svd(hc);
  const Vector& sv = svd.singularValues();
  const double largest = sv(0);
  const double smallest = sv(sv.size() - 1);
  if (!(smallest > kSingularTolerance * largest)) {
    throw SingularOperator("solve_gle: generalized Lyapunov operator is singular (sigma_min=" +
                               std::to_string(smallest) + ", sigma_max=" + std::to_string(largest) + ")",
                           smallest, largest);
  }
  const Vector d = vecs_scaling(p.dim());
  const Vector rhs = vecs(y).cwiseQuotient(d);
  const Vector u = hc.partialPivLu().solve(rhs);
  return vecs_inv(u.cwiseProduct(d));
}

}  // namespace itohinf
