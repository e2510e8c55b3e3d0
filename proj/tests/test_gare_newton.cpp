#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace itohinf;
using namespace itohinf::testing;

namespace {

SystemModel scalar(double a, double a1, double b, double e, double q, double r, double gamma) {
  return SystemModel::from_weights(Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, a1), Matrix::Constant(1, 1, b),
                                   Matrix::Constant(1, 1, e), Matrix::Constant(1, 1, q), Matrix::Constant(1, 1, r),
                                   gamma);
}

SystemModel deterministic_scalar() { return scalar(-1, 0, 1, 0, 1, 1, 1); }
SystemModel stochastic_scalar() { return scalar(-1, 1, 1, 1, 1, 1, 2); }

SystemModel f16() {
  Matrix A(3, 3), A1 = Matrix::Zero(3, 3), B = Matrix::Zero(3, 1), E = Matrix::Zero(3, 1);
  A << -1.01887, 0.90506, -0.00215,
       0.82225, -1.07741, -0.17555,
       0.0, 0.0, -1.0;
  A1(1, 0) = -0.25;
  A1(1, 1) = 0.25;
  B(2, 0) = 1.0;
  E(0, 0) = 1.0;
  return SystemModel::from_weights(A, A1, B, E, Matrix::Identity(3, 3), Matrix::Identity(1, 1), 5.0);
}

SymMat s1(double v) { return SymMat(Matrix::Constant(1, 1, v)); }

}  // namespace

TEST(Residual, MatchesLonghandFormula) {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const SystemModel s = random_model(1 + trial % 4, 1 + trial % 2, 1, rng);
    const SymMat P = random_sym(s.n(), rng);
    EXPECT_LT((gare_residual(s, P).matrix() - gare_longhand(s, P.matrix())).norm(), 1e-11 * (1.0 + P.norm() * P.norm()));
  }
}

TEST(Residual, ZeroAtScalarRootAndEqualsQAtZero) {
  EXPECT_LT(gare_residual(deterministic_scalar(), s1(std::sqrt(2.0) - 1.0)).norm(), 1e-12);
  EXPECT_LT(gare_residual(stochastic_scalar(), s1(2.0 / 3.0)).norm(), 1e-12);
  const SystemModel s = f16();
  EXPECT_LT((gare_residual(s, SymMat::zero(3)).matrix() - s.Q()).norm(), 1e-15);
}

TEST(ClosedLoop, ScalarStochasticHandValues) {
  const SystemModel s = stochastic_scalar();
  EXPECT_NEAR(closed_loop(s, s1(2.0 / 3.0))(0, 0), -1.5, 1e-14);
  // pencil eigenvalue 2(-1.5) + 1 = -2
  EXPECT_NEAR(spectral_abscissa(LyapPencil(closed_loop(s, s1(2.0 / 3.0)), s.A1())), -2.0, 1e-13);
  EXPECT_TRUE(is_stabilizing(s, s1(2.0 / 3.0)));
  EXPECT_LT((closed_loop(s, s1(0.0)) - s.A()).norm(), 1e-15);
}

TEST(Frechet, CentralDifferenceShrinksQuadratically) {
  Rng rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    const SystemModel s = random_model(2 + trial % 3, 1, 1, rng);
    const SymMat P = random_sym(s.n(), rng), dP = random_sym(s.n(), rng);
    const SymMat exact = frechet_apply(s, P, dP);
    auto fd_error = [&](double h) {
      const SymMat fd = (1.0 / (2.0 * h)) * (gare_residual(s, P + h * dP) - gare_residual(s, P - h * dP));
      return (fd - exact).norm();
    };
    // F is quadratic in P, so the central difference is exact up to rounding.
    EXPECT_LT(fd_error(1e-3), 1e-7 * (1.0 + exact.norm()));
    EXPECT_LT(fd_error(1e-4), 1e-6 * (1.0 + exact.norm()));
  }
  EXPECT_LT(frechet_apply(f16(), SymMat::identity(3), SymMat::zero(3)).norm(), 1e-15);
}

TEST(Frechet, ScalarHandExpansion) {
  const SystemModel s = stochastic_scalar();
  const double P = 0.3, dP = 0.7;
  const double a_cl = closed_loop(s, s1(P))(0, 0);
  EXPECT_NEAR(frechet_apply(s, s1(P), s1(dP))(0, 0), 2.0 * a_cl * dP + 1.0 * dP, 1e-14);
}

TEST(Gains, FormulaFromValueMatrix) {
  Rng rng(23);
  const SystemModel s = random_model(3, 2, 2, rng);
  const SymMat P = random_sym(3, rng);
  const PolicyPair g = gains_from_value(s, P);
  EXPECT_LT((s.R() * g.L - s.B().transpose() * P.matrix()).norm(), 1e-12);
  EXPECT_LT((g.F + s.E().transpose() * P.matrix() / 25.0).norm(), 1e-12);
}

TEST(SpuStep, ScalarFirstStepIsOneHalf) {
  EXPECT_NEAR(spu_step(deterministic_scalar(), s1(0.0))(0, 0), 0.5, 1e-15);
}

TEST(SpuStep, FixedPointAtSolution) {
  const SymMat P(s1(std::sqrt(2.0) - 1.0));
  EXPECT_NEAR(spu_step(deterministic_scalar(), P)(0, 0), std::sqrt(2.0) - 1.0, 1e-14);
}

TEST(SpuStep, EqualsNewtonStepOnRandomInstances) {
  Rng rng(24);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const SystemModel s = random_model(1 + trial % 4, 1 + trial % 2, 1 + trial % 3 / 2, rng);
    const SymMat P(0.1 * random_sym(s.n(), rng).matrix());
    if (!is_stabilizing(s, P)) continue;
    const SymMat spu = spu_step(s, P), newton = newton_step(s, P);
    EXPECT_LT((spu - newton).norm(), 1e-9 * (1.0 + spu.norm()));
    ++checked;
  }
  EXPECT_GT(checked, 20);
}

TEST(SpuStep, UnstableClosedLoopRaises) {
  const SystemModel s = scalar(1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0);  // open loop unstable
  try {
    spu_step(s, s1(0.0));
    FAIL() << "expected StepUnstable";
  } catch (const StepUnstable& e) {
    EXPECT_NEAR(e.spectral_abscissa, 2.0, 1e-12);
  }
}

TEST(RunSpu, ScalarClosedForms) {
  const SpuTrace t1 = run_spu(deterministic_scalar(), s1(0.0));
  EXPECT_TRUE(t1.converged);
  EXPECT_NEAR(t1.last().P(0, 0), std::sqrt(2.0) - 1.0, 1e-10);
  EXPECT_LE(t1.last().index, 8u);
  EXPECT_NEAR(t1.last().P(0, 0), scalar_gare_root(-1, 0, 1, 0, 1, 1, 1), 1e-12);

  const SpuTrace t2 = run_spu(stochastic_scalar(), s1(0.0));
  EXPECT_NEAR(t2.last().P(0, 0), 2.0 / 3.0, 1e-10);
  EXPECT_NEAR(t2.last().P(0, 0), scalar_gare_root(-1, 1, 1, 1, 1, 1, 2), 1e-12);
}

TEST(RunSpu, IteratesIndexedConsecutivelyWithNonNegativeResiduals) {
  SpuOptions opt;
  opt.reference = s1(2.0 / 3.0);
  const SpuTrace t = run_spu(stochastic_scalar(), s1(0.0), opt);
  for (std::size_t i = 0; i < t.iterates.size(); ++i) {
    EXPECT_EQ(t.iterates[i].index, i);
    EXPECT_GE(t.iterates[i].residual_norm, 0.0);
    ASSERT_TRUE(t.iterates[i].error_to_ref.has_value());
  }
  EXPECT_LT(*t.last().error_to_ref, 1e-12);
}

TEST(RunSpu, StartingAtSolutionTerminatesImmediately) {
  const SpuTrace t = run_spu(deterministic_scalar(), s1(std::sqrt(2.0) - 1.0));
  EXPECT_LE(t.last().index, 1u);
}

TEST(RunSpu, F16Benchmark) {
  const SystemModel s = f16();
  const SpuTrace t = run_spu(s, SymMat::zero(3));
  Matrix bench(3, 3);
  bench << 1.6908, 1.3700, -0.1647,
           1.3700, 1.6833, -0.1816,
           -0.1647, -0.1816, 0.4372;
  EXPECT_LT(t.last().residual_norm, 1e-12);
  EXPECT_LT((t.last().P.matrix() - bench).cwiseAbs().maxCoeff(), 5e-4);
  EXPECT_TRUE(is_stabilizing(s, t.last().P));
}

TEST(RunSpu, IterationBudgetExhaustedRaisesNonConvergence) {
  SpuOptions opt;
  opt.max_iter = 1;
  EXPECT_THROW(run_spu(f16(), SymMat::zero(3), opt), NonConvergence);
}

TEST(RunSpu, GammaBelowCriticalFails) {
  // With gamma = 0.5 the scalar GARE (gamma^-2 - 1) P^2 - 2 P + 1 = 0 has no real root.
  const SystemModel s = scalar(-1, 0, 1, 1, 1, 1, 0.5);
  EXPECT_THROW(run_spu(s, s1(0.0)), Error);
  EXPECT_THROW(run_spu_with_ramp(s), NonConvergence);
}

TEST(RunSpu, RampFindsStabilizingSolution) {
  Rng rng(25);
  const SystemModel s = random_model(3, 1, 1, rng);
  const SpuTrace t = run_spu_with_ramp(s);
  EXPECT_TRUE(is_stabilizing(s, t.last().P));
  EXPECT_LT(t.last().residual_norm, 1e-12);
}

TEST(QuadraticRate, ScalarRatiosBoundedByTwo) {
  const SymMat ref = s1(std::sqrt(2.0) - 1.0);
  const std::vector<RateSample> r = quadratic_rate_check(run_spu(deterministic_scalar(), s1(0.0)), ref);
  ASSERT_GE(r.size(), 3u);
  const std::size_t from = r.size() > 4 ? r.size() - 4 : 0;
  for (std::size_t k = from; k < r.size(); ++k) EXPECT_LE(r[k].ratio, 2.0);
  EXPECT_LE(r.back().ratio, 1.01 * local_rate_constant(deterministic_scalar(), ref) + 1e-3);
}

TEST(QuadraticRate, LinearSequenceIsDetected) {
  SpuTrace t;
  const SymMat ref = SymMat::identity(2);
  const SymMat S(Matrix::Ones(2, 2));
  for (std::size_t i = 0; i < 20; ++i) {
    SpuIterate it;
    it.index = i;
    it.P = ref + std::pow(2.0, -static_cast<double>(i)) * S;
    t.iterates.push_back(it);
  }
  const std::vector<RateSample> r = quadratic_rate_check(t, ref);
  EXPECT_GT(r.back().ratio, 1e4);
}

TEST(QuadraticRate, ScalarRateConstantsByHand) {
  // k = |G| / |2 a_cl + a1^2|
  EXPECT_NEAR(local_rate_constant(deterministic_scalar(), s1(std::sqrt(2.0) - 1.0)), 1.0 / (2.0 * std::sqrt(2.0)),
              1e-12);
  EXPECT_NEAR(local_rate_constant(stochastic_scalar(), s1(2.0 / 3.0)), 0.75 / 2.0, 1e-12);
}

TEST(Model, ValidationErrors) {
  const Matrix I = Matrix::Identity(2, 2);
  EXPECT_THROW(SystemModel::from_weights(I, I, Matrix::Ones(2, 1), Matrix::Ones(2, 1), I, Matrix::Zero(1, 1), 1.0),
               ModelError);
  EXPECT_THROW(SystemModel::from_weights(I, I, Matrix::Ones(2, 1), Matrix::Ones(2, 1), I, Matrix::Ones(1, 1), -1.0),
               ModelError);
  EXPECT_THROW(SystemModel::from_weights(I, I, Matrix::Ones(3, 1), Matrix::Ones(2, 1), I, Matrix::Ones(1, 1), 1.0),
               DimensionError);
}

TEST(Model, OutputFormDerivesWeights) {
  Matrix C(2, 2), D(2, 1);
  C << 1, 0, 0, 0;
  D << 0, 2;
  const SystemModel s = SystemModel::from_outputs(-Matrix::Identity(2, 2), Matrix::Zero(2, 2), Matrix::Ones(2, 1),
                                                  Matrix::Ones(2, 1), C, D, 3.0);
  EXPECT_LT((s.Q() - C.transpose() * C).norm(), 1e-15);
  EXPECT_NEAR(s.R()(0, 0), 4.0, 1e-15);
}
