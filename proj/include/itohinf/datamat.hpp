#pragma once

// Interval statistics for off-policy evaluation. For every interval
// [t_j, t_j + dt] the learner needs
//
//   delta_j = E[xt(t_j + dt)] - E[xt(t_j)]          xt = vecs(x x^T)
//   Xt_j    = E int xt dtau,   X_j = E int x (x) x,   U_j = E int x (x) u,   V_j = E int x (x) v
//
// from which the linear regression Phi Xi = Upsilon for the next value matrix
// and the products B^T P, E^T P is assembled.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "itohinf/errors.hpp"
#include "itohinf/model.hpp"
#include "itohinf/sde.hpp"
#include "itohinf/symlin.hpp"

namespace itohinf {

/// Number of regression unknowns n(n+1)/2 + n m + n p.
constexpr Index unknown_count(Index n, Index m, Index p) { return triangular_dim(n) + n * m + n * p; }

struct IntervalSpec {
  std::vector<double> starts;
  double width = 0.0;

  /// s back-to-back windows beginning at t0.
  static IntervalSpec contiguous(std::size_t s, double width, double t0 = 0.0) {
    IntervalSpec spec;
    spec.width = width;
    for (std::size_t j = 0; j < s; ++j) spec.starts.push_back(t0 + static_cast<double>(j) * width);
    return spec;
  }

  std::size_t size() const { return starts.size(); }
  double end() const { return starts.empty() ? 0.0 : starts.back() + width; }

  void validate() const {
    if (!(width > 0.0)) throw Error("IntervalSpec: width must be positive");
    if (starts.empty()) throw Error("IntervalSpec: no intervals");
    if (starts.front() < 0.0) throw Error("IntervalSpec: first start must be non-negative");
    for (std::size_t j = 1; j < starts.size(); ++j) {
      if (starts[j] < starts[j - 1] + width - 1e-12 * std::max(1.0, starts[j])) {
        throw Error("IntervalSpec: intervals " + std::to_string(j - 1) + " and " + std::to_string(j) + " overlap");
      }
    }
  }
};

enum class Quadrature {
  left,       // sum_{k=0}^{K-1} f(t_k) h
  right,      // sum_{k=1}^{K} f(t_k) h
  trapezoid,
};

struct DataMatrices {
  Index n = 0, m = 0, p = 0;
  Matrix delta_xt;  // s x n(n+1)/2
  Matrix i_xt;      // s x n(n+1)/2
  Matrix i_xx;      // s x n^2
  Matrix i_xu;      // s x n m
  Matrix i_xv;      // s x n p

  Index rows() const { return delta_xt.rows(); }

  void allocate(Index s) {
    delta_xt = Matrix::Zero(s, triangular_dim(n));
    i_xt = Matrix::Zero(s, triangular_dim(n));
    i_xx = Matrix::Zero(s, n * n);
    i_xu = Matrix::Zero(s, n * m);
    i_xv = Matrix::Zero(s, n * p);
  }

  bool all_finite() const {
    return delta_xt.allFinite() && i_xt.allFinite() && i_xx.allFinite() && i_xu.allFinite() && i_xv.allFinite();
  }
};

/// x (x) y for column vectors: entry b*len(y) + a equals x_b y_a.
inline Vector kron_vec(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
  Vector out(x.size() * y.size());
  for (Index b = 0; b < x.size(); ++b) out.segment(b * y.size(), y.size()) = x(b) * y;
  return out;
}

namespace detail {

struct GridWindow {
  std::size_t first = 0;
  std::size_t substeps = 0;
};

inline GridWindow locate_window(const TrajectoryBatch& batch, double start, double width) {
  const double k_real = (start - batch.t0) / batch.dt;
  const double w_real = width / batch.dt;
  const auto k0 = std::llround(k_real);
  const auto kw = std::llround(w_real);
  const double tol = 1e-9;
  if (k0 < 0 || std::abs(k_real - static_cast<double>(k0)) > tol * std::max(1.0, std::abs(k_real)) ||
      std::abs(w_real - static_cast<double>(kw)) > tol * std::max(1.0, w_real) || kw < 1) {
    throw AlignmentError("interval [" + std::to_string(start) + ", " + std::to_string(start + width) +
                         "] is not aligned with the simulation grid (dt=" + std::to_string(batch.dt) + ")");
  }
  if (static_cast<std::size_t>(k0 + kw) > batch.steps) {
    throw AlignmentError("interval [" + std::to_string(start) + ", " + std::to_string(start + width) +
                         "] extends past the end of the batch");
  }
  return {static_cast<std::size_t>(k0), static_cast<std::size_t>(kw)};
}

inline double quadrature_weight(Quadrature rule, std::size_t k, std::size_t substeps, double h) {
  switch (rule) {
    case Quadrature::left: return k < substeps ? h : 0.0;
    case Quadrature::right: return k > 0 ? h : 0.0;
    case Quadrature::trapezoid: return (k == 0 || k == substeps) ? 0.5 * h : h;
  }
  return 0.0;
}

/// Adds the path-averaged statistics of one window into row j of dm.
inline void accumulate_window(const TrajectoryBatch& batch, const GridWindow& w, Quadrature rule, Index j,
                              DataMatrices& dm) {
  const double inv_paths = 1.0 / static_cast<double>(batch.n_paths());
  for (std::size_t l = 0; l < batch.n_paths(); ++l) {
    const Matrix& X = batch.states[l];
    const Matrix& U = batch.controls[l];
    const Matrix& V = batch.disturbances[l];
    const auto a = static_cast<Index>(w.first);
    const auto b = static_cast<Index>(w.first + w.substeps);
    dm.delta_xt.row(j) += inv_paths * (xtilde(X.col(b)) - xtilde(X.col(a))).transpose();
    for (std::size_t k = 0; k <= w.substeps; ++k) {
      const double wk = quadrature_weight(rule, k, w.substeps, batch.dt) * inv_paths;
      if (wk == 0.0) continue;
      const auto c = static_cast<Index>(w.first + k);
      const Vector x = X.col(c);
      dm.i_xt.row(j) += wk * xtilde(x).transpose();
      dm.i_xx.row(j) += wk * kron_vec(x, x).transpose();
      dm.i_xu.row(j) += wk * kron_vec(x, U.col(c)).transpose();
      dm.i_xv.row(j) += wk * kron_vec(x, V.col(c)).transpose();
    }
  }
}

}  // namespace detail

/// Ensemble estimates: path averages of the increments and Riemann sums over
/// the sub-steps of each interval. Paths are reduced in ascending index order.
inline DataMatrices estimate_stats(const TrajectoryBatch& batch, const IntervalSpec& spec,
                                   Quadrature rule = Quadrature::left) {
  spec.validate();
  if (batch.n_paths() == 0) throw Error("estimate_stats: empty batch");
  DataMatrices dm;
  dm.n = batch.states.front().rows();
  dm.m = batch.controls.front().rows();
  dm.p = batch.disturbances.front().rows();
  dm.allocate(static_cast<Index>(spec.size()));
  for (std::size_t j = 0; j < spec.size(); ++j) {
    detail::accumulate_window(batch, detail::locate_window(batch, spec.starts[j], spec.width), rule,
                              static_cast<Index>(j), dm);
  }
  return dm;
}

/// Branching estimates: interval j is averaged over the continuations in
/// segments[j], which all start from the same recorded state.
inline DataMatrices estimate_stats(const BranchedBatch& branched, const IntervalSpec& spec,
                                   Quadrature rule = Quadrature::left) {
  spec.validate();
  if (branched.segments.size() != spec.size()) throw DimensionError("estimate_stats: one segment per interval expected");
  DataMatrices dm;
  dm.n = branched.trunk.states.front().rows();
  dm.m = branched.trunk.controls.front().rows();
  dm.p = branched.trunk.disturbances.front().rows();
  dm.allocate(static_cast<Index>(spec.size()));
  for (std::size_t j = 0; j < spec.size(); ++j) {
    const TrajectoryBatch& seg = branched.segments[j];
    detail::accumulate_window(seg, detail::locate_window(seg, spec.starts[j], spec.width), rule,
                              static_cast<Index>(j), dm);
  }
  return dm;
}

/// Exact interval statistics for a deterministic initial state, obtained by
/// integrating the first- and second-moment equations of the closed loop
///   mu' = Ac mu + g,   M' = Ac M + M Ac^T + A1 M A1^T + g mu^T + mu g^T,
/// with Ac = A - B L - E F and g = B e_u + E e_v, by classical RK4 with steps
/// no longer than max_step.
inline DataMatrices exact_stats(const SystemModel& model, const PolicyPair& behavior, const IntervalSpec& spec,
                                const Vector& x0, const ExplorationSignal& exploration, double max_step = 1e-3) {
  spec.validate();
  check_gains(behavior, model.n(), model.m(), model.p());
  if (!exploration.deterministic()) throw Error("exact_stats: requires a deterministic (sinusoidal) exploration signal");
  if (x0.size() != model.n()) throw DimensionError("exact_stats: x0 has wrong dimension");
  const Index n = model.n(), m = model.m(), p = model.p();
  const Matrix Ac = model.A() - model.B() * behavior.L - model.E() * behavior.F;
  const Matrix& A1 = model.A1();

  // layout: mu | M | int M | int e_u mu^T | int e_v mu^T
  const Index o_mu = 0, o_m = n, o_im = o_m + n * n, o_iu = o_im + n * n, o_iv = o_iu + m * n;
  const Index len = o_iv + p * n;

  auto rhs = [&](double t, const Vector& y) {
    const Vector e = exploration.at(t);
    const Vector eu = e.head(m), ev = e.tail(p);
    const Vector g = model.B() * eu + model.E() * ev;
    const Vector mu = y.segment(o_mu, n);
    const Matrix M = y.segment(o_m, n * n).reshaped(n, n);
    Vector dy(len);
    dy.segment(o_mu, n) = Ac * mu + g;
    const Matrix dM = Ac * M + M * Ac.transpose() + A1 * M * A1.transpose() + g * mu.transpose() + mu * g.transpose();
    dy.segment(o_m, n * n) = dM.reshaped();
    dy.segment(o_im, n * n) = M.reshaped();
    dy.segment(o_iu, m * n) = (eu * mu.transpose()).reshaped();
    dy.segment(o_iv, p * n) = (ev * mu.transpose()).reshaped();
    return dy;
  };
  auto integrate = [&](Vector& y, double a, double b) {
    if (b <= a) return;
    const auto steps = static_cast<long>(std::ceil((b - a) / max_step - 1e-9));
    const double h = (b - a) / static_cast<double>(steps);
    for (long k = 0; k < steps; ++k) {
      const double t = a + static_cast<double>(k) * h;
      const Vector k1 = rhs(t, y);
      const Vector k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
      const Vector k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
      const Vector k4 = rhs(t + h, y + h * k3);
      y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!y.allFinite()) throw NonFinite("exact_stats: moment equations overflowed; behavior policy may be unstable");
  };

  DataMatrices dm;
  dm.n = n;
  dm.m = m;
  dm.p = p;
  dm.allocate(static_cast<Index>(spec.size()));
  Vector y = Vector::Zero(len);
  y.segment(o_mu, n) = x0;
  y.segment(o_m, n * n) = (x0 * x0.transpose()).reshaped();
  double t = 0.0;
  for (std::size_t j = 0; j < spec.size(); ++j) {
    const auto row = static_cast<Index>(j);
    integrate(y, t, spec.starts[j]);
    y.tail(len - o_im).setZero();
    const SymMat M_start(y.segment(o_m, n * n).reshaped(n, n));
    integrate(y, spec.starts[j], spec.starts[j] + spec.width);
    t = spec.starts[j] + spec.width;
    const SymMat M_end(y.segment(o_m, n * n).reshaped(n, n));
    const Matrix IM = y.segment(o_im, n * n).reshaped(n, n);
    const Matrix IU = y.segment(o_iu, m * n).reshaped(m, n);
    const Matrix IV = y.segment(o_iv, p * n).reshaped(p, n);
    dm.delta_xt.row(row) = (vecs(M_end) - vecs(M_start)).transpose();
    dm.i_xt.row(row) = vecs(SymMat(IM)).transpose();
    dm.i_xx.row(row) = IM.reshaped().transpose();
    dm.i_xu.row(row) = (-behavior.L * IM + IU).reshaped().transpose();
    dm.i_xv.row(row) = (-behavior.F * IM + IV).reshaped().transpose();
  }
  return dm;
}

/// Relative singular-value threshold for numerical rank decisions.
inline constexpr double kRankTolerance = 1e-10;

struct RankReport {
  bool ok = false;
  Index rank = 0;
  Index expected = 0;
  Vector singular_values;
  /// sigma_min / sigma_max of the stacked matrix.
  double ratio = 0.0;
};

inline RankReport numerical_rank(const Matrix& M, Index expected) {
  RankReport r;
  r.expected = expected;
  if (M.rows() == 0 || M.cols() == 0) return r;
  Eigen::JacobiSVD<Matrix> svd(M);
  r.singular_values = svd.singularValues();
  const double smax = r.singular_values(0);
  for (Index k = 0; k < r.singular_values.size(); ++k) {
    if (r.singular_values(k) > kRankTolerance * smax) ++r.rank;
  }
  r.ratio = smax > 0.0 ? r.singular_values(r.singular_values.size() - 1) / smax : 0.0;
  r.ok = r.rank == expected && M.cols() == expected;
  return r;
}

/// rank([Xt, U, V]) == n(n+1)/2 + n m + n p.
inline RankReport rank_check(const DataMatrices& dm) {
  Matrix stacked(dm.rows(), dm.i_xt.cols() + dm.i_xu.cols() + dm.i_xv.cols());
  stacked << dm.i_xt, dm.i_xu, dm.i_xv;
  return numerical_rank(stacked, unknown_count(dm.n, dm.m, dm.p));
}

struct RegressionSystem {
  Matrix Phi;
  Vector Upsilon;
};

/// Phi = [delta, -2 X (I (x) L^T) - 2 U, -2 X (I (x) F^T) - 2 V],
/// Upsilon = Xt vecs(gamma^2 F^T F - Q - L^T R L).
inline RegressionSystem assemble(const DataMatrices& dm, const PolicyPair& target, const CostWeights& costs) {
  check_gains(target, dm.n, dm.m, dm.p);
  if (costs.Q.rows() != dm.n || costs.R.rows() != dm.m) throw DimensionError("assemble: cost weights do not match data");
  const Index n = dm.n, m = dm.m, p = dm.p;
  auto kron_identity = [&](const Matrix& G) {  // I_n (x) G^T
    const Matrix Gt = G.transpose();
    Matrix out = Matrix::Zero(n * Gt.rows(), n * Gt.cols());
    for (Index i = 0; i < n; ++i) out.block(i * Gt.rows(), i * Gt.cols(), Gt.rows(), Gt.cols()) = Gt;
    return out;
  };
  RegressionSystem sys;
  sys.Phi.resize(dm.rows(), unknown_count(n, m, p));
  sys.Phi << dm.delta_xt, -2.0 * dm.i_xx * kron_identity(target.L) - 2.0 * dm.i_xu,
      -2.0 * dm.i_xx * kron_identity(target.F) - 2.0 * dm.i_xv;
  const double g2 = costs.gamma * costs.gamma;
  const SymMat weight(g2 * target.F.transpose() * target.F - costs.Q - target.L.transpose() * costs.R * target.L);
  sys.Upsilon = dm.i_xt * vecs(weight);
  return sys;
}

struct RegressionResult {
  SymMat P_next;   // Theta_1
  Matrix theta2;   // m x n, estimate of B^T P
  Matrix theta3;   // p x n, estimate of E^T P
  double residual_norm = 0.0;
  double condition_estimate = 0.0;
};

/// Least squares by Householder QR; throws RankDeficient when Phi lacks full
/// column rank.
inline RegressionResult solve_ls(const RegressionSystem& sys, Index n, Index m, Index p) {
  const Index d = unknown_count(n, m, p);
  if (sys.Phi.cols() != d) {
    throw DimensionError("solve_ls: Phi has " + std::to_string(sys.Phi.cols()) + " columns, expected " +
                         std::to_string(d));
  }
  if (sys.Upsilon.size() != sys.Phi.rows()) throw DimensionError("solve_ls: Upsilon length does not match Phi rows");
  const RankReport rank = numerical_rank(sys.Phi, d);
  if (!rank.ok) {
    throw RankDeficient("solve_ls: Phi has numerical rank " + std::to_string(rank.rank) + " < " + std::to_string(d) +
                            "; collect more intervals or increase exploration",
                        rank.rank, d, rank.ratio);
  }
  const Vector xi = sys.Phi.householderQr().solve(sys.Upsilon);
  RegressionResult r;
  const Index t = triangular_dim(n);
  r.P_next = vecs_inv(xi.head(t));
  r.theta2 = xi.segment(t, n * m).reshaped(m, n);
  r.theta3 = xi.segment(t + n * m, n * p).reshaped(p, n);
  r.residual_norm = (sys.Phi * xi - sys.Upsilon).norm();
  r.condition_estimate = 1.0 / rank.ratio;
  return r;
}

}  // namespace itohinf
