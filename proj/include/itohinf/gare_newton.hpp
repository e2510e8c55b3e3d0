#pragma once

// Model-based simultaneous policy update (SPU) for the generalized algebraic
// Riccati equation
//
//   F(P) = P A + A^T P + A1^T P A1 - P B R^{-1} B^T P + gamma^{-2} P E E^T P + Q = 0.
//
// Each SPU step evaluates the current policy pair through one generalized
// Lyapunov solve; the resulting sequence is Newton's method on F.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "itohinf/errors.hpp"
#include "itohinf/model.hpp"
#include "itohinf/symlin.hpp"

namespace itohinf {

inline void check_dim(const SystemModel& model, const SymMat& P, const char* where) {
  if (P.dim() != model.n()) {
    throw DimensionError(std::string(where) + ": P is " + std::to_string(P.dim()) + "x" + std::to_string(P.dim()) +
                         ", model has n=" + std::to_string(model.n()));
  }
}

/// B R^{-1} B^T - gamma^{-2} E E^T, the indefinite quadratic weight of the GARE.
inline Matrix quadratic_weight(const SystemModel& model) {
  const double g2 = model.gamma() * model.gamma();
  return model.B() * model.R().llt().solve(model.B().transpose()) - model.E() * model.E().transpose() / g2;
}

inline SymMat gare_residual(const SystemModel& model, const SymMat& P) {
  check_dim(model, P, "gare_residual");
  const Matrix& X = P.matrix();
  return SymMat(X * model.A() + model.A().transpose() * X + model.A1().transpose() * X * model.A1() -
                X * quadratic_weight(model) * X + model.Q());
}

/// A - B R^{-1} B^T P + gamma^{-2} E E^T P.
inline Matrix closed_loop(const SystemModel& model, const SymMat& P) {
  check_dim(model, P, "closed_loop");
  return model.A() - quadratic_weight(model) * P.matrix();
}

/// True when dx = closed_loop(P) x dt + A1 x dW is mean-square stable.
inline bool is_stabilizing(const SystemModel& model, const SymMat& P) {
  return is_ms_stable(LyapPencil(closed_loop(model, P), model.A1()));
}

/// Frechet derivative of F at P applied to dP.
inline SymMat frechet_apply(const SystemModel& model, const SymMat& P, const SymMat& dP) {
  check_dim(model, dP, "frechet_apply");
  return lyap_apply(LyapPencil(closed_loop(model, P), model.A1()), dP);
}

/// Value matrix of the policy pair (L, F): the symmetric solution of
///   X Abar + Abar^T X + A1^T X A1 + Qbar = 0,
/// Abar = A - B L - E F,  Qbar = Q + L^T R L - gamma^2 F^T F.
inline SymMat policy_evaluation(const SystemModel& model, const PolicyPair& gains) {
  check_gains(gains, model.n(), model.m(), model.p());
  const Matrix a_bar = model.A() - model.B() * gains.L - model.E() * gains.F;
  const LyapPencil pencil(a_bar, model.A1());
  const double abscissa = spectral_abscissa(pencil);
  if (!(abscissa < 0.0)) {
    throw StepUnstable("policy evaluation: closed-loop pencil is not mean-square stable (max Re = " +
                           std::to_string(abscissa) + "); re-initialize with a stabilizing P0",
                       abscissa);
  }
  const double g2 = model.gamma() * model.gamma();
  const SymMat q_bar(model.Q() + gains.L.transpose() * model.R() * gains.L - g2 * gains.F.transpose() * gains.F);
  return solve_gle(pencil, -q_bar);
}

/// One SPU step: P_{i+1} from P_i with gains tied to P_i.
inline SymMat spu_step(const SystemModel& model, const SymMat& P) {
  check_dim(model, P, "spu_step");
  return policy_evaluation(model, gains_from_value(model, P));
}

/// Newton step P - F'(P)^{-1} F(P), computed through the Frechet derivative.
inline SymMat newton_step(const SystemModel& model, const SymMat& P) {
  const LyapPencil derivative(closed_loop(model, P), model.A1());
  return P - solve_gle(derivative, gare_residual(model, P));
}

struct SpuIterate {
  std::size_t index = 0;
  SymMat P;
  PolicyPair gains;
  double residual_norm = 0.0;
  std::optional<double> error_to_ref;
};

struct SpuTrace {
  std::vector<SpuIterate> iterates;
  bool converged = false;

  const SpuIterate& last() const { return iterates.back(); }
};

struct SpuOptions {
  std::size_t max_iter = 50;
  double tol = 1e-12;
  std::optional<SymMat> reference;
};

/// Runs SPU from P0 until ||F(P^i)||_F < tol. Throws NonConvergence when
/// max_iter steps do not reach tol and StepUnstable when an iterate loses
/// mean-square stability.
inline SpuTrace run_spu(const SystemModel& model, const SymMat& P0, const SpuOptions& opt = {}) {
  check_dim(model, P0, "run_spu");
  SpuTrace trace;
  SymMat P = P0;
  for (std::size_t i = 0;; ++i) {
    SpuIterate it;
    it.index = i;
    it.P = P;
    it.gains = gains_from_value(model, P);
    it.residual_norm = gare_residual(model, P).norm();
    if (opt.reference) it.error_to_ref = (P - *opt.reference).norm();
    if (!std::isfinite(it.residual_norm)) {
      throw NonFinite("run_spu: non-finite residual at iteration " + std::to_string(i));
    }
    const double residual = it.residual_norm;
    trace.iterates.push_back(std::move(it));
    if (residual < opt.tol) {
      trace.converged = true;
      return trace;
    }
    if (i == opt.max_iter) {
      throw NonConvergence("run_spu: residual " + std::to_string(residual) + " after " + std::to_string(i) +
                               " iterations exceeds tol; gamma may be below the critical attenuation level",
                           residual);
    }
    P = spu_step(model, P);
  }
}

struct RampOptions {
  double c_step = 0.5;
  std::size_t max_attempts = 40;
};

/// Tries P0 = c I for c = 0, c_step, 2 c_step, ... and returns the first run
/// that converges to a stabilizing solution.
inline SpuTrace run_spu_with_ramp(const SystemModel& model, const SpuOptions& opt = {}, const RampOptions& ramp = {}) {
  std::string last_error = "no attempt made";
  for (std::size_t k = 0; k < ramp.max_attempts; ++k) {
    const double c = ramp.c_step * static_cast<double>(k);
    try {
      SpuTrace trace = run_spu(model, SymMat(c * Matrix::Identity(model.n(), model.n())), opt);
      if (is_stabilizing(model, trace.last().P)) return trace;
      last_error = "converged to a non-stabilizing solution at c=" + std::to_string(c);
    } catch (const StepUnstable& e) {
      last_error = e.what();
    } catch (const NonConvergence& e) {
      last_error = e.what();
    } catch (const SingularOperator& e) {
      last_error = e.what();
    } catch (const NonFinite& e) {
      last_error = e.what();
    }
  }
  throw NonConvergence("run_spu_with_ramp: no initial scale c*I converged (" + last_error + ")",
                       std::numeric_limits<double>::quiet_NaN());
}

struct RateSample {
  std::size_t index = 0;
  double ratio = 0.0;  // ||P^{i+1} - P_ref|| / ||P^i - P_ref||^2
};

/// Quadratic-rate ratios along a trace. Iterates whose squared distance to
/// P_ref is below 1e-15 are skipped.
inline std::vector<RateSample> quadratic_rate_check(const SpuTrace& trace, const SymMat& P_ref) {
  std::vector<RateSample> out;
  for (std::size_t i = 0; i + 1 < trace.iterates.size(); ++i) {
    const double e0 = (trace.iterates[i].P - P_ref).norm();
    const double e1 = (trace.iterates[i + 1].P - P_ref).norm();
    const double denom = e0 * e0;
    if (denom < 1e-15) continue;
    out.push_back({i, e1 / denom});
  }
  return out;
}

/// Asymptotic constant of the quadratic rate at a solution P*: the Newton error
/// obeys P^{i+1} - P* = -F'(P^i)^{-1}[(P^i - P*) G (P^i - P*)] with
/// G = B R^{-1} B^T - gamma^{-2} E E^T, so the ratio tends to at most
/// ||F'(P*)^{-1}||_2 ||G||_2 (norms in Frobenius-isometric coordinates).
inline double local_rate_constant(const SystemModel& model, const SymMat& P_star) {
  const Matrix op = hcal_vecs_matrix(LyapPencil(closed_loop(model, P_star), model.A1()));
  Eigen::JacobiSVD<Matrix> svd(op);
  const double inv_norm = 1.0 / svd.singularValues().tail(1)(0);
  Eigen::JacobiSVD<Matrix> g(quadratic_weight(model));
  return inv_norm * g.singularValues()(0);
}

}  // namespace itohinf
