#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "itohinf/errors.hpp"
#include "itohinf/symlin.hpp"

namespace itohinf {

/// The quantities a model-free learner is allowed to see.
struct CostWeights {
  Matrix Q;
  Matrix R;
  double gamma = 1.0;
};

/// Linear Ito system
///   dx = (A x + B u + E v) dt + A1 x dW,   z = [C x; D u]
/// with attenuation level gamma. Q = C^T C and R = D^T D.
class SystemModel {
 public:
  static SystemModel from_outputs(Matrix A, Matrix A1, Matrix B, Matrix E, Matrix C, Matrix D, double gamma) {
    SystemModel s;
    s.a_ = std::move(A);
    s.a1_ = std::move(A1);
    s.b_ = std::move(B);
    s.e_ = std::move(E);
    s.c_ = std::move(C);
    s.d_ = std::move(D);
    s.gamma_ = gamma;
    if (s.c_.cols() != s.a_.rows()) throw DimensionError("SystemModel: C must have n columns");
    if (s.d_.cols() != s.b_.cols()) throw DimensionError("SystemModel: D must have m columns");
    s.q_ = s.c_.transpose() * s.c_;
    s.r_ = s.d_.transpose() * s.d_;
    s.validate();
    return s;
  }

  /// Builds the model from cost weights directly; C and D are taken as the
  /// symmetric square roots of Q and R.
  static SystemModel from_weights(Matrix A, Matrix A1, Matrix B, Matrix E, const Matrix& Q, const Matrix& R,
                                  double gamma) {
    if (Q.rows() != Q.cols() || R.rows() != R.cols()) throw DimensionError("SystemModel: Q and R must be square");
    SystemModel s;
    s.a_ = std::move(A);
    s.a1_ = std::move(A1);
    s.b_ = std::move(B);
    s.e_ = std::move(E);
    s.q_ = 0.5 * (Q + Q.transpose());
    s.r_ = 0.5 * (R + R.transpose());
    s.gamma_ = gamma;
    s.c_ = sym_sqrt(s.q_, "Q");
    s.d_ = sym_sqrt(s.r_, "R");
    s.validate();
    return s;
  }

  Index n() const { return a_.rows(); }
  Index m() const { return b_.cols(); }
  Index p() const { return e_.cols(); }

  const Matrix& A() const { return a_; }
  const Matrix& A1() const { return a1_; }
  const Matrix& B() const { return b_; }
  const Matrix& E() const { return e_; }
  const Matrix& C() const { return c_; }
  const Matrix& D() const { return d_; }
  const Matrix& Q() const { return q_; }
  const Matrix& R() const { return r_; }
  double gamma() const { return gamma_; }

  Matrix R_inv() const { return r_.llt().solve(Matrix::Identity(m(), m())); }

  CostWeights costs() const { return {q_, r_, gamma_}; }

 private:
  SystemModel() = default;

  static Matrix sym_sqrt(const Matrix& s, const char* name) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(s);
    if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff())) {
      throw ModelError(std::string("SystemModel: ") + name + " is not positive semidefinite");
    }
    const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
  }

  void validate() const {
    const Index nn = a_.rows();
    auto need = [](bool ok, const std::string& msg) {
      if (!ok) throw DimensionError("SystemModel: " + msg);
    };
    need(a_.cols() == nn && nn > 0, "A must be square and non-empty");
    need(a1_.rows() == nn && a1_.cols() == nn, "A1 must be n x n");
    need(b_.rows() == nn && b_.cols() > 0, "B must have n rows");
    need(e_.rows() == nn && e_.cols() > 0, "E must have n rows");
    need(q_.rows() == nn && q_.cols() == nn, "Q must be n x n");
    need(r_.rows() == b_.cols() && r_.cols() == b_.cols(), "R must be m x m");
    if (!(gamma_ > 0.0) || !std::isfinite(gamma_)) throw ModelError("SystemModel: gamma must be positive");
    Eigen::LLT<Matrix> llt(r_);
    if (llt.info() != Eigen::Success) throw ModelError("SystemModel: R = D^T D is not positive definite");
  }

  Matrix a_, a1_, b_, e_, c_, d_, q_, r_;
  double gamma_ = 1.0;
};

/// Feedback gains for u = -L x and v = -F x.
struct PolicyPair {
  Matrix L;  // m x n
  Matrix F;  // p x n
};

/// L = R^{-1} B^T P, F = -gamma^{-2} E^T P.
inline PolicyPair gains_from_value(const SystemModel& model, const SymMat& P) {
  const Matrix& Pm = P.matrix();
  return {model.R().llt().solve(model.B().transpose() * Pm),
          -(model.E().transpose() * Pm) / (model.gamma() * model.gamma())};
}

inline void check_gains(const PolicyPair& g, Index n, Index m, Index p) {
  if (g.L.rows() != m || g.L.cols() != n) {
    throw DimensionError("PolicyPair: L must be " + std::to_string(m) + "x" + std::to_string(n));
  }
  if (g.F.rows() != p || g.F.cols() != n) {
    throw DimensionError("PolicyPair: F must be " + std::to_string(p) + "x" + std::to_string(n));
  }
}

}  // namespace itohinf
