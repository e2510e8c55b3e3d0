#pragma once

// Off-policy learning of the GARE solution from trajectory data.
//
// Data are collected once under a fixed behavior policy with exploration. Each
// iteration then re-assembles the regression for the current target gains and
// solves it; the learner sees only the data and (Q, R, gamma).

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "itohinf/datamat.hpp"
#include "itohinf/errors.hpp"
#include "itohinf/model.hpp"
#include "itohinf/sde.hpp"
#include "itohinf/symlin.hpp"

namespace itohinf {

enum class LearnMode {
  exact,       // interval statistics from the moment equations
  montecarlo,  // interval statistics from simulated sample paths
};

enum class Sampling {
  ensemble,   // averages over independent paths from x0
  branching,  // averages over continuations from a common recorded state
};

struct LearnConfig {
  PolicyPair initial_gains;        // behavior policy and first target policy
  std::optional<SymMat> P0_hat;    // metadata only
  std::size_t iterations = 20;
  IntervalSpec intervals;
  SimConfig sim;
  LearnMode mode = LearnMode::montecarlo;
  Sampling sampling = Sampling::ensemble;
  Quadrature quadrature = Quadrature::left;
  double stop_tol = 0.0;  // early stop on ||P^{i+1} - P^i||_F < stop_tol when positive
};

struct LearnStep {
  std::size_t index = 0;
  std::optional<SymMat> P;  // absent at index 0 unless P0_hat was given
  PolicyPair gains;
  double ls_residual = std::numeric_limits<double>::quiet_NaN();
  double condition = std::numeric_limits<double>::quiet_NaN();
  bool rank_ok = false;
};

struct LearnTrace {
  std::vector<LearnStep> steps;
  RankReport rank;
  DataMatrices data;
  std::optional<TrajectoryBatch> batch;

  const SymMat& P_final() const { return *steps.back().P; }
  const PolicyPair& gains_final() const { return steps.back().gains; }
};

/// The learning phase proper. Inputs are restricted to data and cost weights, so
/// it cannot consult A, A1, B or E.
inline LearnTrace learn_from_data(const DataMatrices& dm, const CostWeights& costs, const PolicyPair& initial_gains,
                                  std::size_t iterations, double stop_tol = 0.0,
                                  std::optional<SymMat> P0_hat = std::nullopt) {
  if (iterations < 1) throw Error("learn_from_data: iteration budget must be at least 1");
  check_gains(initial_gains, dm.n, dm.m, dm.p);
  if (!dm.all_finite()) throw NonFinite("learn_from_data: data matrices contain non-finite entries");
  LearnTrace trace;
  trace.data = dm;
  trace.rank = rank_check(dm);
  if (!trace.rank.ok) {
    throw RankDeficient("rank condition failed: rank([Xt, U, V]) = " + std::to_string(trace.rank.rank) + " < " +
                            std::to_string(trace.rank.expected) +
                            "; increase exploration amplitude or the number of intervals",
                        trace.rank.rank, trace.rank.expected, trace.rank.ratio);
  }
  const double g2 = costs.gamma * costs.gamma;
  const Eigen::LLT<Matrix> r_llt(costs.R);

  LearnStep first;
  first.index = 0;
  first.P = std::move(P0_hat);
  first.gains = initial_gains;
  first.rank_ok = true;
  trace.steps.push_back(first);

  for (std::size_t i = 0; i < iterations; ++i) {
    const LearnStep& cur = trace.steps.back();
    const RegressionResult reg = solve_ls(assemble(dm, cur.gains, costs), dm.n, dm.m, dm.p);
    LearnStep next;
    next.index = i + 1;
    next.P = reg.P_next;
    next.gains.L = r_llt.solve(reg.theta2);
    next.gains.F = -reg.theta3 / g2;
    next.ls_residual = reg.residual_norm;
    next.condition = reg.condition_estimate;
    next.rank_ok = true;
    if (!reg.P_next.matrix().allFinite() || !next.gains.L.allFinite() || !next.gains.F.allFinite()) {
      throw NonFinite("learn_from_data: non-finite iterate at step " + std::to_string(i + 1));
    }
    const bool stop = stop_tol > 0.0 && cur.P && (reg.P_next - *cur.P).norm() < stop_tol;
    trace.steps.push_back(std::move(next));
    if (stop) break;
  }
  return trace;
}

/// Collects data from the simulator (or moment equations) under the behavior
/// policy, then runs learn_from_data. The model is only used for data collection.
inline LearnTrace run_learning(const SystemModel& model_for_sim, const LearnConfig& cfg) {
  cfg.intervals.validate();
  check_gains(cfg.initial_gains, model_for_sim.n(), model_for_sim.m(), model_for_sim.p());
  DataMatrices dm;
  std::optional<TrajectoryBatch> batch;
  if (cfg.mode == LearnMode::exact) {
    const ExplorationSignal exploration(cfg.sim.exploration, model_for_sim.m() + model_for_sim.p(), cfg.sim.seed);
    dm = exact_stats(model_for_sim, cfg.initial_gains, cfg.intervals, cfg.sim.x0, exploration);
  } else {
    SimConfig sim = cfg.sim;
    sim.t_end = std::max(sim.t_end, cfg.intervals.end());
    if (cfg.sampling == Sampling::branching) {
      const BranchedBatch branched =
          simulate_branches(model_for_sim, cfg.initial_gains, sim, cfg.intervals.starts, cfg.intervals.width);
      dm = estimate_stats(branched, cfg.intervals, cfg.quadrature);
      batch = branched.trunk;
    } else {
      batch = simulate_batch(model_for_sim, cfg.initial_gains, sim);
      dm = estimate_stats(*batch, cfg.intervals, cfg.quadrature);
    }
  }
  LearnTrace trace = learn_from_data(dm, model_for_sim.costs(), cfg.initial_gains, cfg.iterations, cfg.stop_tol,
                                     cfg.P0_hat);
  trace.batch = std::move(batch);
  return trace;
}

struct ProbeResult {
  bool stabilizing = false;
  double initial_mean_sq = 0.0;
  double final_mean_sq = 0.0;
};

/// Classifies gains by simulating without exploration: stabilizing when
/// E||x(t_end)||^2 < factor * ||x0||^2.
inline ProbeResult behavior_probe(const SystemModel& model, const PolicyPair& gains, const SimConfig& sim,
                                  double factor = 0.5) {
  SimConfig quiet = sim;
  quiet.exploration.amplitude = 0.0;
  ProbeResult r;
  std::vector<MomentSample> curve;
  try {
    curve = ms_decay_probe(simulate_batch(model, gains, quiet));
  } catch (const PathDiverged&) {
    r.initial_mean_sq = sim.x0.squaredNorm();
    r.final_mean_sq = std::numeric_limits<double>::infinity();
    return r;
  }
  r.initial_mean_sq = curve.front().mean_sq_norm;
  r.final_mean_sq = curve.back().mean_sq_norm;
  r.stabilizing = std::isfinite(r.final_mean_sq) && r.final_mean_sq < factor * r.initial_mean_sq;
  return r;
}

}  // namespace itohinf
