#pragma once

// Robust SPU: policy iteration in which the block matrix
//
//          [ Q + A^T P + P A + A1^T P A1   P B   P E       ]
//   M(P) = [ B^T P                         R     0         ]
//          [ E^T P                         0     -gamma^2 I ]
//
// produced by policy evaluation is corrupted by an additive error dM before the
// gains are read off it. Used to measure how evaluation errors propagate
// through the learning loop.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "itohinf/errors.hpp"
#include "itohinf/gare_newton.hpp"
#include "itohinf/model.hpp"
#include "itohinf/sde.hpp"
#include "itohinf/symlin.hpp"

namespace itohinf {

/// Symmetric (n+m+p) square matrix partitioned into 3 x 3 blocks.
class BlockM {
 public:
  BlockM(const Eigen::Ref<const Matrix>& value, Index n, Index m, Index p) : n_(n), m_(m), p_(p) {
    if (value.rows() != n + m + p || value.cols() != n + m + p) {
      throw DimensionError("BlockM: expected a " + std::to_string(n + m + p) + " square matrix");
    }
    value_ = 0.5 * (value + value.transpose());
  }

  static BlockM zero(Index n, Index m, Index p) { return BlockM(Matrix::Zero(n + m + p, n + m + p), n, m, p); }

  Index n() const { return n_; }
  Index m() const { return m_; }
  Index p() const { return p_; }
  const Matrix& value() const { return value_; }

  Matrix b11() const { return value_.topLeftCorner(n_, n_); }
  Matrix b21() const { return value_.block(n_, 0, m_, n_); }
  Matrix b22() const { return value_.block(n_, n_, m_, m_); }
  Matrix b31() const { return value_.block(n_ + m_, 0, p_, n_); }
  Matrix b32() const { return value_.block(n_ + m_, n_, p_, m_); }
  Matrix b33() const { return value_.block(n_ + m_, n_ + m_, p_, p_); }

  friend BlockM operator+(const BlockM& a, const BlockM& b) {
    if (a.n_ != b.n_ || a.m_ != b.m_ || a.p_ != b.p_) throw DimensionError("BlockM: partition mismatch");
    return BlockM(a.value_ + b.value_, a.n_, a.m_, a.p_);
  }

 private:
  Matrix value_;
  Index n_, m_, p_;
};

inline BlockM m_of_p(const SystemModel& model, const SymMat& P) {
  check_dim(model, P, "m_of_p");
  const Index n = model.n(), m = model.m(), p = model.p();
  const Matrix& X = P.matrix();
  Matrix M = Matrix::Zero(n + m + p, n + m + p);
  M.topLeftCorner(n, n) =
      model.Q() + model.A().transpose() * X + X * model.A() + model.A1().transpose() * X * model.A1();
  M.block(0, n, n, m) = X * model.B();
  M.block(0, n + m, n, p) = X * model.E();
  M.block(n, 0, m, n) = model.B().transpose() * X;
  M.block(n, n, m, m) = model.R();
  M.block(n + m, 0, p, n) = model.E().transpose() * X;
  M.block(n + m, n + m, p, p) = -model.gamma() * model.gamma() * Matrix::Identity(p, p);
  return BlockM(M, n, m, p);
}

/// [I, -L^T, -F^T] Z [I, -L^T, -F^T]^T.
inline SymMat r_op(const BlockM& Z, const PolicyPair& gains) {
  check_gains(gains, Z.n(), Z.m(), Z.p());
  Matrix T(Z.n(), Z.n() + Z.m() + Z.p());
  T << Matrix::Identity(Z.n(), Z.n()), -gains.L.transpose(), -gains.F.transpose();
  return SymMat(T * Z.value() * T.transpose());
}

struct RobustStep {
  SymMat P_next;
  PolicyPair gains_next;
  BlockM M_hat;
};

namespace detail {

inline Matrix solve_block(const Matrix& block, const Matrix& rhs, const char* name) {
  Eigen::JacobiSVD<Matrix> svd(block);
  const Vector& sv = svd.singularValues();
  if (!(sv(sv.size() - 1) > 1e-12 * std::max(1.0, sv(0)))) {
    throw BlockSingular(std::string("robust SPU: perturbed block ") + name +
                        " is singular; the evaluation error is too large");
  }
  return block.fullPivLu().solve(rhs);
}

}  // namespace detail

/// Inexact policy evaluation and simultaneous improvement. P_next solves
/// r_op(M(P_next), L, F) = 0; the gains are read off M(P_next) + dM.
inline RobustStep robust_spu_step(const SystemModel& model, const PolicyPair& gains_hat, const BlockM& dM) {
  if (dM.n() != model.n() || dM.m() != model.m() || dM.p() != model.p()) {
    throw DimensionError("robust_spu_step: perturbation partition does not match the model");
  }
  SymMat P_next = policy_evaluation(model, gains_hat);
  const BlockM M_hat = m_of_p(model, P_next) + dM;
  PolicyPair next{detail::solve_block(M_hat.b22(), M_hat.b21(), "[2,2]"),
                  detail::solve_block(M_hat.b33(), M_hat.b31(), "[3,3]")};
  return {std::move(P_next), std::move(next), M_hat};
}

enum class ScheduleKind { constant, decaying, custom };

/// Frobenius norms of the injected errors dM^i, i >= 1. Directions are random
/// symmetric matrices drawn from a stream seeded by `seed`.
struct ErrorSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  double magnitude = 0.0;
  double decay_ratio = 0.1;  // decaying: magnitude * decay_ratio^i
  std::vector<double> custom;
  std::uint64_t seed = 0;

  double at(std::size_t i) const {
    switch (kind) {
      case ScheduleKind::constant: return magnitude;
      case ScheduleKind::decaying: return magnitude * std::pow(decay_ratio, static_cast<double>(i));
      case ScheduleKind::custom: return (i >= 1 && i <= custom.size()) ? custom[i - 1] : 0.0;
    }
    return 0.0;
  }

  void validate() const {
    if (magnitude < 0.0) throw Error("ErrorSchedule: magnitude must be non-negative");
    for (double c : custom) {
      if (c < 0.0) throw Error("ErrorSchedule: custom magnitudes must be non-negative");
    }
  }
};

/// Random symmetric matrix with unit Frobenius norm.
inline Matrix random_unit_symmetric(Index dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    Matrix S(dim, dim);
    for (Index c = 0; c < dim; ++c) {
      for (Index r = 0; r < dim; ++r) S(r, c) = normal(rng);
    }
    S = (0.5 * (S + S.transpose())).eval();
    const double nrm = S.norm();
    if (nrm > 1e-12) return S / nrm;
  }
}

struct RobustTrace {
  std::vector<SymMat> P;              // P^0 .. P^N
  std::vector<PolicyPair> gains;      // gains^0 .. gains^N
  std::vector<double> perturbation;   // ||dM^i||_F, entry 0 is 0
  std::vector<double> error_norms;    // ||P^i - P_ref||_F when a reference is given
};

/// Robust SPU from P0_hat with gains^0 tied to P0_hat (dM^0 = 0).
inline RobustTrace run_robust_spu(const SystemModel& model, const SymMat& P0_hat, const ErrorSchedule& schedule,
                                  std::size_t iterations, const std::optional<SymMat>& P_ref = std::nullopt) {
  schedule.validate();
  check_dim(model, P0_hat, "run_robust_spu");
  const Index dim = model.n() + model.m() + model.p();
  std::mt19937_64 rng(mix_seed(schedule.seed));
  RobustTrace trace;
  trace.P.push_back(P0_hat);
  trace.gains.push_back(gains_from_value(model, P0_hat));
  trace.perturbation.push_back(0.0);
  if (P_ref) trace.error_norms.push_back((P0_hat - *P_ref).norm());
  for (std::size_t i = 1; i <= iterations; ++i) {
    const double size = schedule.at(i);
    const Matrix dir = random_unit_symmetric(dim, rng);
    const BlockM dM(size * dir, model.n(), model.m(), model.p());
    RobustStep step = robust_spu_step(model, trace.gains.back(), dM);
    if (!step.P_next.matrix().allFinite()) throw NonFinite("run_robust_spu: non-finite iterate " + std::to_string(i));
    if (P_ref) trace.error_norms.push_back((step.P_next - *P_ref).norm());
    trace.P.push_back(std::move(step.P_next));
    trace.gains.push_back(std::move(step.gains_next));
    trace.perturbation.push_back(size);
  }
  return trace;
}

/// Largest error over the second half of a run.
inline double plateau(const std::vector<double>& errors) {
  if (errors.empty()) return 0.0;
  const std::size_t from = errors.size() / 2;
  return *std::max_element(errors.begin() + static_cast<std::ptrdiff_t>(from), errors.end());
}

/// Empirical envelope ||P^i - P*|| <= eps^i ||P^0 - P*|| + C delta.
struct IssEnvelope {
  double eps = 1.0;
  double C = 0.0;
};

inline bool iss_bound_holds(const std::vector<double>& errors, double delta, const IssEnvelope& env) {
  if (errors.empty()) return true;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    const double bound = std::pow(env.eps, static_cast<double>(i)) * errors[0] + env.C * delta;
    if (!(errors[i] <= bound)) return false;
  }
  return true;
}

/// C is `margin` times the observed plateau per unit delta. eps starts from the
/// smallest value on a 0.01 grid in (0, 1) for which the envelope covers the
/// run, and is then widened by the same margin while staying below 1.
inline IssEnvelope fit_iss_envelope(const std::vector<double>& errors, double delta, double margin = 2.0) {
  IssEnvelope env;
  env.C = delta > 0.0 ? margin * plateau(errors) / delta : 0.0;
  for (int k = 1; k < 100; ++k) {
    IssEnvelope trial{0.01 * k, env.C};
    if (iss_bound_holds(errors, delta, trial)) {
      trial.eps = std::min(margin * trial.eps, 0.5 * (1.0 + trial.eps));
      return trial;
    }
  }
  env.eps = 1.0;
  return env;
}

struct IssSweepConfig {
  std::vector<double> deltas;
  std::vector<std::uint64_t> seeds;
  std::size_t iterations = 30;
  double rho = 0.05;  // ||P^0 - P*||_F = rho * ||P*||_F
  ScheduleKind kind = ScheduleKind::constant;
  double decay_ratio = 0.1;
};

struct IssRun {
  double delta = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> errors;
};

/// P^0 = P* + rho ||P*|| S with S a seed-dependent unit symmetric direction.
inline SymMat perturbed_start(const SymMat& P_star, double rho, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed ^ 0x57a47ULL));
  return P_star + SymMat(rho * P_star.norm() * random_unit_symmetric(P_star.dim(), rng));
}

/// Runs every (delta, seed) pair concurrently; results are ordered by delta
/// then seed as listed in the config.
inline std::vector<IssRun> iss_sweep(const SystemModel& model, const SymMat& P_star, const IssSweepConfig& cfg) {
  std::vector<std::future<IssRun>> jobs;
  for (double delta : cfg.deltas) {
    for (std::uint64_t seed : cfg.seeds) {
      jobs.push_back(std::async(std::launch::async, [&model, &P_star, &cfg, delta, seed] {
        ErrorSchedule schedule;
        schedule.kind = cfg.kind;
        schedule.magnitude = delta;
        schedule.decay_ratio = cfg.decay_ratio;
        schedule.seed = seed;
        const RobustTrace t =
            run_robust_spu(model, perturbed_start(P_star, cfg.rho, seed), schedule, cfg.iterations, P_star);
        return IssRun{delta, seed, t.error_norms};
      }));
    }
  }
  std::vector<IssRun> out;
  out.reserve(jobs.size());
  for (auto& job : jobs) out.push_back(job.get());
  return out;
}

}  // namespace itohinf
