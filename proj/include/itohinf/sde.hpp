#pragma once

// Euler-Maruyama simulation of
//   dx = (A x + B u + E v) dt + A1 x dW
// under linear behavior policies u = -L x + e_u(t), v = -F x + e_v(t).

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "itohinf/errors.hpp"
#include "itohinf/model.hpp"
#include "itohinf/symlin.hpp"

namespace itohinf {

/// SplitMix64 finalizer; decorrelates nearby seeds before they reach the engine.
constexpr std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum class ExplorationKind { sinusoids, white };

struct ExplorationSpec {
  ExplorationKind kind = ExplorationKind::sinusoids;
  double amplitude = 0.1;
  /// Shared by every channel when non-empty; otherwise n_sinusoids frequencies
  /// per channel are drawn from [0.1, 5] using the seed.
  std::vector<double> frequencies;
  int n_sinusoids = 10;
};

/// Exploration added to the m control and p disturbance channels (in that order).
class ExplorationSignal {
 public:
  ExplorationSignal(const ExplorationSpec& spec, Index channels, std::uint64_t seed)
      : spec_(spec), channels_(channels) {
    if (spec.amplitude < 0.0) throw Error("ExplorationSpec: amplitude must be non-negative");
    if (spec.kind != ExplorationKind::sinusoids) return;
    std::mt19937_64 rng(mix_seed(seed ^ 0x5eedf00dULL));
    std::uniform_real_distribution<double> freq(0.1, 5.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    const auto count = spec.frequencies.empty() ? static_cast<std::size_t>(spec.n_sinusoids) : spec.frequencies.size();
    freqs_.assign(static_cast<std::size_t>(channels), {});
    phases_.assign(static_cast<std::size_t>(channels), {});
    for (Index c = 0; c < channels; ++c) {
      for (std::size_t k = 0; k < count; ++k) {
        freqs_[c].push_back(spec.frequencies.empty() ? freq(rng) : spec.frequencies[k]);
        phases_[c].push_back(phase(rng));
      }
    }
  }

  bool deterministic() const { return spec_.kind == ExplorationKind::sinusoids || spec_.amplitude == 0.0; }
  Index channels() const { return channels_; }
  const ExplorationSpec& spec() const { return spec_; }

  /// Deterministic part of the signal at time t (zero for white noise).
  Vector at(double t) const {
    Vector e = Vector::Zero(channels_);
    if (spec_.kind != ExplorationKind::sinusoids || spec_.amplitude == 0.0) return e;
    for (Index c = 0; c < channels_; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < freqs_[c].size(); ++k) s += std::sin(freqs_[c][k] * t + phases_[c][k]);
      e(c) = spec_.amplitude * s;
    }
    return e;
  }

 private:
  ExplorationSpec spec_;
  Index channels_;
  std::vector<std::vector<double>> freqs_;
  std::vector<std::vector<double>> phases_;
};

struct SimConfig {
  Vector x0;
  double t_end = 1.0;
  double dt_fine = 1e-2;
  std::size_t n_paths = 1;
  std::uint64_t seed = 0;
  ExplorationSpec exploration;
  unsigned threads = 0;  // 0: hardware concurrency

  void validate() const {
    if (!(dt_fine > 0.0)) throw Error("SimConfig: dt_fine must be positive");
    if (!(t_end >= dt_fine)) throw Error("SimConfig: t_end must be at least dt_fine");
    if (n_paths < 1) throw Error("SimConfig: n_paths must be at least 1");
    if (exploration.amplitude < 0.0) throw Error("SimConfig: exploration amplitude must be non-negative");
  }

  std::size_t steps() const { return static_cast<std::size_t>(std::llround(t_end / dt_fine)); }
};

/// Sample paths on the uniform grid t0 + k dt, k = 0..steps. Column k of each
/// per-path matrix holds the value at grid point k; inputs are those applied on
/// [t_k, t_{k+1}) (the last column is evaluated but not applied).
struct TrajectoryBatch {
  double t0 = 0.0;
  double dt = 0.0;
  std::size_t steps = 0;
  std::vector<Matrix> states;        // n x (steps+1) per path
  std::vector<Matrix> controls;      // m x (steps+1)
  std::vector<Matrix> disturbances;  // p x (steps+1)
  SimConfig config;
  PolicyPair behavior;

  std::size_t n_paths() const { return states.size(); }
  Index n() const { return states.empty() ? 0 : states.front().rows(); }
  double time(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }
};

namespace detail {

inline std::uint64_t path_seed(std::uint64_t seed, std::size_t path) {
  return mix_seed(mix_seed(seed) ^ static_cast<std::uint64_t>(path));
}

/// Runs fn(l) for l in [0, count) over a small thread pool. Results must be
/// written to per-index slots; the first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  if (workers <= 1) {
    for (std::size_t l = 0; l < count; ++l) fn(l);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t l = next++; l < count; l = next++) {
        try {
          fn(l);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

inline void simulate_path(const SystemModel& model, const PolicyPair& gains, const Vector& x0, double t0,
                          std::size_t steps, double dt, std::uint64_t seed, const ExplorationSignal& exploration,
                          std::size_t label, Matrix& X, Matrix& U, Matrix& V) {
  const Index n = model.n(), m = model.m(), p = model.p();
  X.resize(n, static_cast<Index>(steps + 1));
  U.resize(m, static_cast<Index>(steps + 1));
  V.resize(p, static_cast<Index>(steps + 1));
  std::mt19937_64 brownian(seed);
  std::mt19937_64 dither(mix_seed(seed ^ 0xd17e4ULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sqrt_dt = std::sqrt(dt);
  const bool white = exploration.spec().kind == ExplorationKind::white && exploration.spec().amplitude > 0.0;

  Vector x = x0;
  for (std::size_t k = 0; k <= steps; ++k) {
    const auto col = static_cast<Index>(k);
    Vector e;
    if (white) {
      e.resize(m + p);
      for (Index c = 0; c < m + p; ++c) e(c) = exploration.spec().amplitude * normal(dither);
    } else {
      e = exploration.at(t0 + static_cast<double>(k) * dt);
    }
    const Vector u = -gains.L * x + e.head(m);
    const Vector v = -gains.F * x + e.tail(p);
    X.col(col) = x;
    U.col(col) = u;
    V.col(col) = v;
    if (k == steps) break;
    const double dw = sqrt_dt * normal(brownian);
    x = x + (model.A() * x + model.B() * u + model.E() * v) * dt + model.A1() * x * dw;
    if (!x.allFinite()) {
      throw PathDiverged("simulate: path " + std::to_string(label) + " diverged at step " + std::to_string(k + 1), label,
                         k + 1);
    }
  }
}

}  // namespace detail

/// Simulates cfg.n_paths independent paths from cfg.x0. Path l draws its
/// Brownian increments from a stream seeded by mix(mix(seed) ^ l), so the batch is
/// bitwise independent of the thread count.
inline TrajectoryBatch simulate_batch(const SystemModel& model, const PolicyPair& gains, const SimConfig& cfg) {
  cfg.validate();
  check_gains(gains, model.n(), model.m(), model.p());
  if (cfg.x0.size() != model.n()) throw DimensionError("simulate_batch: x0 has wrong dimension");
  const ExplorationSignal exploration(cfg.exploration, model.m() + model.p(), cfg.seed);

  TrajectoryBatch batch;
  batch.t0 = 0.0;
  batch.dt = cfg.dt_fine;
  batch.steps = cfg.steps();
  batch.config = cfg;
  batch.behavior = gains;
  batch.states.resize(cfg.n_paths);
  batch.controls.resize(cfg.n_paths);
  batch.disturbances.resize(cfg.n_paths);
  detail::parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t l) {
    detail::simulate_path(model, gains, cfg.x0, 0.0, batch.steps, batch.dt, detail::path_seed(cfg.seed, l), exploration,
                          l, batch.states[l], batch.controls[l], batch.disturbances[l]);
  });
  return batch;
}

/// Data for conditional-expectation estimates by branching: one recorded trunk
/// path, and for every interval [t_j, t_j + width] a fresh ensemble of
/// cfg.n_paths continuations started from the trunk state at t_j.
struct BranchedBatch {
  TrajectoryBatch trunk;
  std::vector<TrajectoryBatch> segments;
};

inline BranchedBatch simulate_branches(const SystemModel& model, const PolicyPair& gains, const SimConfig& cfg,
                                       const std::vector<double>& starts, double width) {
  if (starts.empty()) throw Error("simulate_branches: no intervals");
  SimConfig trunk_cfg = cfg;
  trunk_cfg.n_paths = 1;
  trunk_cfg.t_end = std::max(cfg.t_end, *std::max_element(starts.begin(), starts.end()) + width);
  BranchedBatch out;
  out.trunk = simulate_batch(model, gains, trunk_cfg);
  const ExplorationSignal exploration(cfg.exploration, model.m() + model.p(), cfg.seed);
  const auto seg_steps = static_cast<std::size_t>(std::llround(width / cfg.dt_fine));
  out.segments.resize(starts.size());
  for (std::size_t j = 0; j < starts.size(); ++j) {
    const double k_real = starts[j] / cfg.dt_fine;
    const auto k0 = static_cast<std::size_t>(std::llround(k_real));
    if (std::abs(k_real - static_cast<double>(k0)) > 1e-9 * std::max(1.0, k_real)) {
      throw AlignmentError("simulate_branches: interval start " + std::to_string(starts[j]) + " is off the grid");
    }
    TrajectoryBatch& seg = out.segments[j];
    seg.t0 = static_cast<double>(k0) * cfg.dt_fine;
    seg.dt = cfg.dt_fine;
    seg.steps = seg_steps;
    seg.config = cfg;
    seg.config.x0 = out.trunk.states[0].col(static_cast<Index>(k0));
    seg.behavior = gains;
    seg.states.resize(cfg.n_paths);
    seg.controls.resize(cfg.n_paths);
    seg.disturbances.resize(cfg.n_paths);
    const std::uint64_t seg_seed = mix_seed(cfg.seed ^ (static_cast<std::uint64_t>(j + 1) << 32));
    detail::parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t l) {
      detail::simulate_path(model, gains, seg.config.x0, seg.t0, seg_steps, cfg.dt_fine, detail::path_seed(seg_seed, l),
                            exploration, l, seg.states[l], seg.controls[l], seg.disturbances[l]);
    });
  }
  return out;
}

struct MomentSample {
  double t = 0.0;
  double mean_sq_norm = 0.0;
};

/// Ensemble second moment E ||x(t)||^2 along the grid.
inline std::vector<MomentSample> ms_decay_probe(const TrajectoryBatch& batch) {
  if (batch.n_paths() == 0) throw Error("ms_decay_probe: empty batch");
  std::vector<MomentSample> out(batch.steps + 1);
  for (std::size_t k = 0; k <= batch.steps; ++k) {
    double acc = 0.0;
    for (const Matrix& X : batch.states) acc += X.col(static_cast<Index>(k)).squaredNorm();
    out[k] = {batch.time(k), acc / static_cast<double>(batch.n_paths())};
  }
  return out;
}

}  // namespace itohinf
