#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace itohinf;
using namespace itohinf::testing;

namespace {

SystemModel scalar(double a, double a1) {
  return SystemModel::from_weights(Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, a1), Matrix::Ones(1, 1),
                                   Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1), 2.0);
}

PolicyPair zero_gains(const SystemModel& s) {
  return {Matrix::Zero(s.m(), s.n()), Matrix::Zero(s.p(), s.n())};
}

SimConfig quiet_config(Index n, std::size_t paths, double t_end, double dt) {
  SimConfig cfg;
  cfg.x0 = Vector::Ones(n);
  cfg.n_paths = paths;
  cfg.t_end = t_end;
  cfg.dt_fine = dt;
  cfg.seed = 99;
  cfg.exploration.amplitude = 0.0;
  return cfg;
}

bool same_batch(const TrajectoryBatch& a, const TrajectoryBatch& b) {
  if (a.n_paths() != b.n_paths()) return false;
  for (std::size_t l = 0; l < a.n_paths(); ++l) {
    if (a.states[l] != b.states[l] || a.controls[l] != b.controls[l] || a.disturbances[l] != b.disturbances[l]) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST(Simulate, ShapesAndInitialState) {
  Rng rng(31);
  const SystemModel s = random_model(3, 2, 1, rng);
  SimConfig cfg = quiet_config(3, 4, 1.0, 0.01);
  cfg.x0 << 0.1, -0.2, 0.3;
  const TrajectoryBatch b = simulate_batch(s, zero_gains(s), cfg);
  ASSERT_EQ(b.n_paths(), 4u);
  EXPECT_EQ(b.steps, 100u);
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_EQ(b.states[l].rows(), 3);
    EXPECT_EQ(b.states[l].cols(), 101);
    EXPECT_EQ(b.controls[l].rows(), 2);
    EXPECT_EQ(b.disturbances[l].rows(), 1);
    EXPECT_EQ(b.states[l].col(0), cfg.x0);
  }
  EXPECT_DOUBLE_EQ(b.time(100), 1.0);
}

TEST(Simulate, BitwiseIndependentOfThreadCount) {
  Rng rng(32);
  const SystemModel s = random_model(2, 1, 1, rng);
  SimConfig cfg = quiet_config(2, 37, 2.0, 0.01);
  cfg.exploration.amplitude = 0.1;
  cfg.threads = 1;
  const TrajectoryBatch serial = simulate_batch(s, zero_gains(s), cfg);
  cfg.threads = 5;
  const TrajectoryBatch parallel = simulate_batch(s, zero_gains(s), cfg);
  EXPECT_TRUE(same_batch(serial, parallel));

  cfg.exploration.kind = ExplorationKind::white;
  cfg.threads = 1;
  const TrajectoryBatch w1 = simulate_batch(s, zero_gains(s), cfg);
  cfg.threads = 3;
  EXPECT_TRUE(same_batch(w1, simulate_batch(s, zero_gains(s), cfg)));
}

TEST(Simulate, SeedChangesPaths) {
  const SystemModel s = scalar(-1.0, 1.0);
  SimConfig cfg = quiet_config(1, 3, 1.0, 0.01);
  const TrajectoryBatch a = simulate_batch(s, zero_gains(s), cfg);
  cfg.seed = 100;
  EXPECT_FALSE(same_batch(a, simulate_batch(s, zero_gains(s), cfg)));
  EXPECT_NE(a.states[0], a.states[1]);
}

TEST(Simulate, EnsembleMomentsMatchEulerMaruyamaRecursion) {
  // For x_{k+1} = x_k (1 + a h + a1 dW): E x_k = (1 + a h)^k and
  // E x_k^2 = ((1 + a h)^2 + a1^2 h)^k.
  const double a = -1.0, a1 = 1.0, h = 0.01;
  const SystemModel s = scalar(a, a1);
  const TrajectoryBatch b = simulate_batch(s, zero_gains(s), quiet_config(1, 20000, 1.0, h));
  const double m1 = std::pow(1.0 + a * h, 100.0);
  const double m2 = std::pow((1.0 + a * h) * (1.0 + a * h) + a1 * a1 * h, 100.0);
  double s1 = 0.0, s2 = 0.0, s4 = 0.0;
  for (const Matrix& X : b.states) {
    const double x = X(0, 100);
    s1 += x;
    s2 += x * x;
    s4 += x * x * x * x;
  }
  const double L = static_cast<double>(b.n_paths());
  const double mean = s1 / L, msq = s2 / L;
  const double se1 = std::sqrt((msq - mean * mean) / L);
  const double se2 = std::sqrt((s4 / L - msq * msq) / L);
  EXPECT_NEAR(mean, m1, 4.0 * se1);
  EXPECT_NEAR(msq, m2, 4.0 * se2);
  const std::vector<MomentSample> curve = ms_decay_probe(b);
  EXPECT_DOUBLE_EQ(curve.back().mean_sq_norm, msq);
  EXPECT_DOUBLE_EQ(curve.front().mean_sq_norm, 1.0);
}

TEST(Simulate, RecordedInputsFollowPolicyPlusExploration) {
  Rng rng(33);
  const SystemModel s = random_model(2, 1, 1, rng);
  PolicyPair g{Matrix::Constant(1, 2, 0.3), Matrix::Constant(1, 2, -0.1)};
  SimConfig cfg = quiet_config(2, 2, 0.5, 0.05);
  cfg.exploration.amplitude = 0.2;
  const TrajectoryBatch b = simulate_batch(s, g, cfg);
  const ExplorationSignal e(cfg.exploration, 2, cfg.seed);
  for (std::size_t k = 0; k <= b.steps; ++k) {
    const auto c = static_cast<Index>(k);
    const Vector ek = e.at(b.time(k));
    EXPECT_NEAR(b.controls[1](0, c), (-g.L * b.states[1].col(c))(0) + ek(0), 1e-14);
    EXPECT_NEAR(b.disturbances[1](0, c), (-g.F * b.states[1].col(c))(0) + ek(1), 1e-14);
  }
}

TEST(Exploration, SeededSinusoidsAreReproducibleAndBounded) {
  ExplorationSpec spec;
  spec.amplitude = 0.1;
  const ExplorationSignal a(spec, 3, 5), b(spec, 3, 5), c(spec, 3, 6);
  EXPECT_TRUE(a.deterministic());
  double max_abs = 0.0;
  for (int k = 0; k < 200; ++k) {
    const double t = 0.05 * k;
    EXPECT_EQ(a.at(t), b.at(t));
    max_abs = std::max(max_abs, a.at(t).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(max_abs, 0.1 * spec.n_sinusoids);
  EXPECT_GT(max_abs, 0.0);
  EXPECT_NE(a.at(1.0), c.at(1.0));
  spec.amplitude = 0.0;
  EXPECT_EQ(ExplorationSignal(spec, 2, 5).at(0.7), Vector::Zero(2));
  spec.kind = ExplorationKind::white;
  spec.amplitude = 0.1;
  EXPECT_FALSE(ExplorationSignal(spec, 2, 5).deterministic());
}

TEST(Exploration, SharedFrequenciesAreUsed) {
  ExplorationSpec spec;
  spec.amplitude = 1.0;
  spec.frequencies = {0.0};  // constant sin(phase) per channel
  const ExplorationSignal e(spec, 2, 1);
  EXPECT_DOUBLE_EQ(e.at(0.0)(0), e.at(10.0)(0));
}

TEST(Simulate, DivergenceIsReported) {
  const SystemModel s = scalar(1e200, 0.0);
  try {
    simulate_batch(s, zero_gains(s), quiet_config(1, 2, 5.0, 1.0));
    FAIL() << "expected PathDiverged";
  } catch (const PathDiverged& e) {
    EXPECT_LE(e.step, 5u);
  }
}

TEST(Simulate, ConfigValidation) {
  const SystemModel s = scalar(-1.0, 0.0);
  SimConfig cfg = quiet_config(1, 0, 1.0, 0.1);
  EXPECT_THROW(simulate_batch(s, zero_gains(s), cfg), Error);
  cfg = quiet_config(2, 1, 1.0, 0.1);
  EXPECT_THROW(simulate_batch(s, zero_gains(s), cfg), DimensionError);
  cfg = quiet_config(1, 1, 1.0, -0.1);
  EXPECT_THROW(simulate_batch(s, zero_gains(s), cfg), Error);
}

TEST(Branching, SegmentsStartFromTrunkState) {
  Rng rng(34);
  const SystemModel s = random_model(2, 1, 1, rng);
  SimConfig cfg = quiet_config(2, 8, 1.0, 0.01);
  const BranchedBatch br = simulate_branches(s, zero_gains(s), cfg, {0.0, 0.5, 1.0}, 0.5);
  ASSERT_EQ(br.segments.size(), 3u);
  EXPECT_EQ(br.trunk.steps, 150u);
  for (std::size_t j = 0; j < 3; ++j) {
    const TrajectoryBatch& seg = br.segments[j];
    EXPECT_EQ(seg.steps, 50u);
    EXPECT_DOUBLE_EQ(seg.t0, 0.5 * static_cast<double>(j));
    for (const Matrix& X : seg.states) EXPECT_EQ(X.col(0), br.trunk.states[0].col(static_cast<Index>(50 * j)));
  }
  EXPECT_THROW(simulate_branches(s, zero_gains(s), cfg, {0.005}, 0.5), AlignmentError);
}
