#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace itohinf;
using namespace itohinf::testing;

TEST(Vecs, UpperTriangleRowWiseWithScaledOffDiagonals) {
  Matrix X(3, 3);
  X << 1, 2, 3,
       2, 4, 5,
       3, 5, 6;
  Vector expect(6);
  expect << 1, kSqrt2 * 2, kSqrt2 * 3, 4, kSqrt2 * 5, 6;
  EXPECT_TRUE(vecs(SymMat(X)).isApprox(expect, 1e-15));
}

TEST(Vecs, RoundTripAndIsometry) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 1 + trial % 6;
    const SymMat X = random_sym(n, rng), Y = random_sym(n, rng);
    EXPECT_LT((vecs_inv(vecs(X)) - X).norm(), 1e-14 * (1.0 + X.norm()));
    const double frob_inner = (X.matrix().cwiseProduct(Y.matrix())).sum();
    EXPECT_NEAR(vecs(X).dot(vecs(Y)), frob_inner, 1e-12 * (1.0 + std::abs(frob_inner)));
  }
}

TEST(Vecs, RejectsNonTriangularLength) {
  EXPECT_THROW(vecs_inv(Vector::Zero(4)), DimensionError);
  EXPECT_FALSE(dim_from_triangular(5).has_value());
  EXPECT_EQ(dim_from_triangular(10).value(), 4);
}

TEST(Xtilde, PairsWithVecsAsQuadraticForm) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 1 + trial % 5;
    const SymMat P = random_sym(n, rng);
    const Vector x = gaussian(n, 1, rng);
    const double quad = x.dot(P.matrix() * x);
    EXPECT_NEAR(xtilde(x).dot(vecs(P)), quad, 1e-12 * (1.0 + std::abs(quad)));
    EXPECT_LT((xtilde(x) - vecs(SymMat(x * x.transpose()))).norm(), 1e-13 * (1.0 + x.squaredNorm()));
  }
}

TEST(HRep, ExpandsPlainUpperTriangleToVec) {
  Rng rng(13);
  for (Index n = 1; n <= 5; ++n) {
    const HRep h = build_hrep(n);
    const SymMat X = random_sym(n, rng);
    Vector u(triangular_dim(n));
    Index k = 0;
    for (Index i = 0; i < n; ++i) {
      for (Index j = i; j < n; ++j) u(k++) = X(i, j);
    }
    EXPECT_LT((h.H * u - X.matrix().reshaped()).norm(), 1e-14);
  }
  EXPECT_THROW(build_hrep(0), DimensionError);
}

TEST(Hcal, MatchesKroneckerOperatorOnSymmetricInputs) {
  Rng rng(14);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 1 + trial % 6;
    const LyapPencil pen(gaussian(n, n, rng), gaussian(n, n, rng));
    const SymMat X = random_sym(n, rng);
    const Matrix via_kron = (kron_operator(pen.A(), pen.A1()) * X.matrix().reshaped()).reshaped(n, n);
    const Vector via_hcal = hcal_vecs_matrix(pen) * vecs(X);
    EXPECT_LT((vecs_inv(via_hcal).matrix() - via_kron).norm(), 1e-11 * (1.0 + via_kron.norm()));
    EXPECT_LT((lyap_apply(pen, X).matrix() - via_kron).norm(), 1e-11 * (1.0 + via_kron.norm()));
  }
}

TEST(Spectrum, ScalarAbscissaIsDriftPlusItoCorrection) {
  // d E[x^2] / dt = (2 a + a1^2) E[x^2]
  const LyapPencil pen(Matrix::Constant(1, 1, -1.0), Matrix::Constant(1, 1, 1.2));
  EXPECT_NEAR(spectral_abscissa(pen), -2.0 + 1.44, 1e-14);
  EXPECT_FALSE(is_ms_stable(LyapPencil(Matrix::Constant(1, 1, -1.0), Matrix::Constant(1, 1, 1.5))));
}

TEST(Spectrum, SymmetricSpectrumBoundedByKroneckerAbscissa) {
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 2 + trial % 4;
    const LyapPencil pen = random_stable_pencil(n, rng);
    EXPECT_LE(spectral_abscissa(pen), kron_abscissa(pen.A(), pen.A1()) + 1e-10);
    EXPECT_TRUE(is_ms_stable(pen));
  }
}

TEST(SolveGle, MatchesFullKroneckerSolve) {
  Rng rng(16);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 1 + trial % 6;
    const LyapPencil pen = random_stable_pencil(n, rng);
    const SymMat Y = random_sym(n, rng);
    const Matrix oracle = kron_solve(pen.A(), pen.A1(), Y.matrix());
    const SymMat X = solve_gle(pen, Y);
    EXPECT_LT((X.matrix() - oracle).norm() / oracle.norm(), 1e-9) << "n=" << n;
    EXPECT_LT((lyap_apply(pen, X) - Y).norm(), 1e-9 * (1.0 + Y.norm()));
  }
}

TEST(SolveGle, StableOperatorMapsNegativeDefiniteToPositiveDefinite) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 1 + trial % 5;
    const LyapPencil pen = random_stable_pencil(n, rng);
    const Matrix G = gaussian(n, n, rng);
    const SymMat Y(-(G * G.transpose() + 0.1 * Matrix::Identity(n, n)));
    Eigen::SelfAdjointEigenSolver<Matrix> es(solve_gle(pen, Y).matrix());
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(SolveGle, UnscaledVecsInputGivesWrongAnswer) {
  // Feeding vecs(Y) straight into hcal^{-1} mixes scaled and unscaled
  // coordinates; the D^{-1} .. D correction is what makes the solve exact.
  Matrix A(2, 2), A1(2, 2), Y(2, 2);
  A << -1.0, 0.4, 0.1, -2.0;
  A1 << 0.2, 0.1, 0.0, 0.3;
  Y << 1.0, 0.5, 0.5, 2.0;
  const LyapPencil pen(A, A1);
  const Matrix oracle = kron_solve(A, A1, Y);
  const Vector naive = hcal_matrix(pen).partialPivLu().solve(vecs(SymMat(Y)));
  EXPECT_GT((vecs_inv(naive).matrix() - oracle).norm(), 1e-3);
  EXPECT_LT((solve_gle(pen, SymMat(Y)).matrix() - oracle).norm(), 1e-12);
}

TEST(SolveGle, SingularOperatorIsReported) {
  // L(X) = X A + A^T X vanishes on X = diag(1, 0) when A = diag(0, -1).
  Matrix A = Matrix::Zero(2, 2);
  A(1, 1) = -1.0;
  try {
    solve_gle(LyapPencil(A, Matrix::Zero(2, 2)), SymMat::identity(2));
    FAIL() << "expected SingularOperator";
  } catch (const SingularOperator& e) {
    EXPECT_LT(e.smallest_singular_value, 1e-12);
    EXPECT_GT(e.largest_singular_value, 0.0);
  }
}

TEST(SolveGle, DimensionMismatch) {
  EXPECT_THROW(LyapPencil(Matrix::Zero(2, 2), Matrix::Zero(3, 3)), DimensionError);
  EXPECT_THROW(solve_gle(LyapPencil(-Matrix::Identity(2, 2), Matrix::Zero(2, 2)), SymMat::identity(3)),
               DimensionError);
}

TEST(SymMat, SymmetrizesAndRejectsNonSquare) {
  Matrix M(2, 2);
  M << 1, 2, 4, 3;
  const SymMat S(M);
  EXPECT_EQ(S(0, 1), S(1, 0));
  EXPECT_DOUBLE_EQ(S(0, 1), 3.0);
  EXPECT_THROW(SymMat(Matrix::Zero(2, 3)), DimensionError);
}
