#pragma once

// Experiment configuration (JSON). Matrices are nested row-major arrays and
// their shapes are checked against the dims declared in the model block.
// Every validation failure raises ConfigError naming the offending field.

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "itohinf/datamat.hpp"
#include "itohinf/errors.hpp"
#include "itohinf/gare_newton.hpp"
#include "itohinf/io.hpp"
#include "itohinf/model.hpp"
#include "itohinf/offpolicy.hpp"
#include "itohinf/robust.hpp"
#include "itohinf/sde.hpp"

namespace itohinf {

class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error("config error at '" + field + "': " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct SolveBlock {
  std::optional<Matrix> P0;
  bool ramp = true;
  RampOptions ramp_options;
  std::size_t max_iter = 50;
  double tol = 1e-12;
};

struct LearnBlock {
  LearnMode mode = LearnMode::montecarlo;
  Sampling sampling = Sampling::ensemble;
  Quadrature quadrature = Quadrature::left;
  std::size_t iterations = 20;
  double interval_width = 0.5;
  std::size_t substeps = 100;
  std::size_t intervals = 0;  // 0: twice the number of unknowns
  double start = 0.0;
  PolicyPair initial_gains;
  std::optional<Matrix> P0;
  double stop_tol = 0.0;
};

struct RobustBlock {
  std::vector<double> deltas;
  std::vector<std::uint64_t> seeds;
  std::size_t iterations = 30;
  double rho = 0.05;
  ScheduleKind schedule = ScheduleKind::constant;
  double decay_ratio = 0.1;
};

struct ExperimentConfig {
  std::optional<SystemModel> model;
  SolveBlock solve;
  SimConfig sim;
  std::optional<LearnBlock> learn;
  std::optional<RobustBlock> robust;
  std::string output = "out";

  const SystemModel& system() const { return *model; }

  /// LearnConfig for run_learning; the simulation step is width / substeps.
  LearnConfig learn_config() const {
    if (!learn) throw ConfigError("learn", "block is required for this command");
    const LearnBlock& lb = *learn;
    LearnConfig cfg;
    cfg.initial_gains = lb.initial_gains;
    if (lb.P0) cfg.P0_hat = SymMat(*lb.P0);
    cfg.iterations = lb.iterations;
    const std::size_t s =
        lb.intervals > 0 ? lb.intervals
                         : static_cast<std::size_t>(2 * unknown_count(model->n(), model->m(), model->p()));
    cfg.intervals = IntervalSpec::contiguous(s, lb.interval_width, lb.start);
    cfg.sim = sim;
    cfg.sim.dt_fine = lb.interval_width / static_cast<double>(lb.substeps);
    cfg.sim.t_end = std::max(sim.t_end, cfg.intervals.end());
    cfg.mode = lb.mode;
    cfg.sampling = lb.sampling;
    cfg.quadrature = lb.quadrature;
    cfg.stop_tol = lb.stop_tol;
    return cfg;
  }
};

namespace config_detail {

using json = nlohmann::json;

class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {}

  const json& node() const { return node_; }
  const std::string& path() const { return path_; }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return node_.contains(key) && !node_.at(key).is_null(); }

  Reader child(const std::string& key) const {
    if (!has(key)) throw ConfigError(at(key), "missing required field");
    if (!node_.at(key).is_object()) throw ConfigError(at(key), "expected an object");
    return Reader(node_.at(key), at(key));
  }

  double number(const std::string& key) const {
    if (!has(key)) throw ConfigError(at(key), "missing required field");
    const json& v = node_.at(key);
    if (!v.is_number()) throw ConfigError(at(key), "expected a number");
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

  std::uint64_t count(const std::string& key) const {
    if (!has(key)) throw ConfigError(at(key), "missing required field");
    const json& v = node_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError(at(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }
  std::uint64_t count(const std::string& key, std::uint64_t fallback) const { return has(key) ? count(key) : fallback; }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!node_.at(key).is_boolean()) throw ConfigError(at(key), "expected true or false");
    return node_.at(key).get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    if (!node_.at(key).is_string()) throw ConfigError(at(key), "expected a string");
    return node_.at(key).get<std::string>();
  }

  Matrix matrix(const std::string& key, Index rows, Index cols) const {
    if (!has(key)) throw ConfigError(at(key), "missing required field");
    const json& v = node_.at(key);
    const std::string where = at(key);
    if (!v.is_array() || static_cast<Index>(v.size()) != rows) {
      throw ConfigError(where, "expected " + std::to_string(rows) + " x " + std::to_string(cols) +
                                   " matrix (nested arrays)");
    }
    Matrix M(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      const json& row = v[static_cast<std::size_t>(r)];
      const std::string rw = where + "[" + std::to_string(r) + "]";
      if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
        throw ConfigError(rw, "expected " + std::to_string(cols) + " entries");
      }
      for (Index c = 0; c < cols; ++c) {
        const json& e = row[static_cast<std::size_t>(c)];
        if (!e.is_number()) throw ConfigError(rw + "[" + std::to_string(c) + "]", "expected a number");
        M(r, c) = e.get<double>();
      }
    }
    return M;
  }

  std::vector<double> numbers(const std::string& key) const {
    if (!has(key)) throw ConfigError(at(key), "missing required field");
    const json& v = node_.at(key);
    if (!v.is_array()) throw ConfigError(at(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!v[k].is_number()) throw ConfigError(at(key) + "[" + std::to_string(k) + "]", "expected a number");
      out.push_back(v[k].get<double>());
    }
    return out;
  }

  Vector vector(const std::string& key, Index len) const {
    const std::vector<double> v = numbers(key);
    if (static_cast<Index>(v.size()) != len) {
      throw ConfigError(at(key), "expected " + std::to_string(len) + " entries, got " + std::to_string(v.size()));
    }
    return Eigen::Map<const Vector>(v.data(), len);
  }

 private:
  const json& node_;
  std::string path_;
};

inline Index dim(const Reader& r, const std::string& key) {
  const auto v = r.count(key);
  if (v < 1) throw ConfigError(r.at(key), "dimension must be at least 1");
  return static_cast<Index>(v);
}

inline SystemModel parse_model(const Reader& r) {
  const Index n = dim(r, "n"), m = dim(r, "m"), p = dim(r, "p");
  const Matrix A = r.matrix("A", n, n);
  const Matrix A1 = r.has("A1") ? r.matrix("A1", n, n) : Matrix::Zero(n, n);
  const Matrix B = r.matrix("B", n, m);
  const Matrix E = r.matrix("E", n, p);
  const double gamma = r.number("gamma");
  if (!(gamma > 0.0)) throw ConfigError(r.at("gamma"), "must be positive");
  const bool weights = r.has("Q") || r.has("R");
  const bool outputs = r.has("C") || r.has("D");
  if (weights && outputs) throw ConfigError(r.path(), "give either Q/R or C/D, not both");
  try {
    if (outputs) {
      if (!r.has("C")) throw ConfigError(r.at("C"), "missing required field");
      const Index q = static_cast<Index>(r.node().at("C").size());
      if (q < 1) throw ConfigError(r.at("C"), "must have at least one row");
      return SystemModel::from_outputs(A, A1, B, E, r.matrix("C", q, n), r.matrix("D", q, m), gamma);
    }
    return SystemModel::from_weights(A, A1, B, E, r.matrix("Q", n, n), r.matrix("R", m, m), gamma);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(r.path(), e.what());
  }
}

inline void parse_solve(const Reader& r, Index n, SolveBlock& out) {
  if (r.has("P0")) out.P0 = r.matrix("P0", n, n);
  out.ramp = r.flag("ramp", !out.P0.has_value());
  out.ramp_options.c_step = r.number("ramp_step", out.ramp_options.c_step);
  if (!(out.ramp_options.c_step > 0.0)) throw ConfigError(r.at("ramp_step"), "must be positive");
  out.ramp_options.max_attempts = r.count("ramp_attempts", out.ramp_options.max_attempts);
  out.max_iter = r.count("max_iter", out.max_iter);
  if (out.max_iter < 1) throw ConfigError(r.at("max_iter"), "must be at least 1");
  out.tol = r.number("tol", out.tol);
  if (!(out.tol > 0.0)) throw ConfigError(r.at("tol"), "must be positive");
  if (!out.ramp && !out.P0) throw ConfigError(r.at("P0"), "required when ramp is false");
}

inline void parse_sim(const Reader& r, Index n, SimConfig& out) {
  out.x0 = r.vector("x0", n);
  out.n_paths = r.count("n_paths", 1);
  if (out.n_paths < 1) throw ConfigError(r.at("n_paths"), "must be at least 1");
  out.seed = r.count("seed", 0);
  out.threads = static_cast<unsigned>(r.count("threads", 0));
  out.t_end = r.number("t_end", out.t_end);
  out.dt_fine = r.number("dt_fine", out.dt_fine);
  if (!(out.dt_fine > 0.0)) throw ConfigError(r.at("dt_fine"), "must be positive");
  if (!(out.t_end >= out.dt_fine)) throw ConfigError(r.at("t_end"), "must be at least dt_fine");
  if (r.has("exploration")) {
    const Reader e = r.child("exploration");
    const std::string kind = e.text("kind", "sinusoids");
    if (kind == "sinusoids") {
      out.exploration.kind = ExplorationKind::sinusoids;
    } else if (kind == "white") {
      out.exploration.kind = ExplorationKind::white;
    } else {
      throw ConfigError(e.at("kind"), "expected 'sinusoids' or 'white'");
    }
    out.exploration.amplitude = e.number("amplitude", out.exploration.amplitude);
    if (!(out.exploration.amplitude >= 0.0)) throw ConfigError(e.at("amplitude"), "must be non-negative");
    out.exploration.n_sinusoids = static_cast<int>(e.count("n_sinusoids", 10));
    if (e.has("frequencies")) out.exploration.frequencies = e.numbers("frequencies");
  }
}

inline LearnBlock parse_learn(const Reader& r, Index n, Index m, Index p) {
  LearnBlock lb;
  const std::string mode = r.text("mode", "montecarlo");
  if (mode == "exact") {
    lb.mode = LearnMode::exact;
  } else if (mode == "montecarlo") {
    lb.mode = LearnMode::montecarlo;
  } else {
    throw ConfigError(r.at("mode"), "expected 'exact' or 'montecarlo'");
  }
  const std::string sampling = r.text("sampling", "ensemble");
  if (sampling == "ensemble") {
    lb.sampling = Sampling::ensemble;
  } else if (sampling == "branching") {
    lb.sampling = Sampling::branching;
  } else {
    throw ConfigError(r.at("sampling"), "expected 'ensemble' or 'branching'");
  }
  const std::string quad = r.text("quadrature", "left");
  if (quad == "left") {
    lb.quadrature = Quadrature::left;
  } else if (quad == "right") {
    lb.quadrature = Quadrature::right;
  } else if (quad == "trapezoid") {
    lb.quadrature = Quadrature::trapezoid;
  } else {
    throw ConfigError(r.at("quadrature"), "expected 'left', 'right' or 'trapezoid'");
  }
  lb.iterations = r.count("iterations", lb.iterations);
  if (lb.iterations < 1) throw ConfigError(r.at("iterations"), "must be at least 1");
  lb.interval_width = r.number("interval_width", lb.interval_width);
  if (!(lb.interval_width > 0.0)) throw ConfigError(r.at("interval_width"), "must be positive");
  lb.substeps = r.count("substeps", lb.substeps);
  if (lb.substeps < 1) throw ConfigError(r.at("substeps"), "must be at least 1");
  lb.intervals = r.count("intervals", 0);
  lb.start = r.number("start", 0.0);
  if (!(lb.start >= 0.0)) throw ConfigError(r.at("start"), "must be non-negative");
  lb.initial_gains.L = r.has("L0") ? r.matrix("L0", m, n) : Matrix::Zero(m, n);
  lb.initial_gains.F = r.has("F0") ? r.matrix("F0", p, n) : Matrix::Zero(p, n);
  if (r.has("P0")) lb.P0 = r.matrix("P0", n, n);
  lb.stop_tol = r.number("stop_tol", 0.0);
  return lb;
}

inline RobustBlock parse_robust(const Reader& r) {
  RobustBlock rb;
  rb.deltas = r.numbers("deltas");
  if (rb.deltas.empty()) throw ConfigError(r.at("deltas"), "must not be empty");
  for (std::size_t k = 0; k < rb.deltas.size(); ++k) {
    if (!(rb.deltas[k] >= 0.0)) throw ConfigError(r.at("deltas") + "[" + std::to_string(k) + "]", "must be non-negative");
  }
  if (!r.has("seeds")) throw ConfigError(r.at("seeds"), "missing required field");
  const auto& seeds = r.node().at("seeds");
  if (!seeds.is_array() || seeds.empty()) throw ConfigError(r.at("seeds"), "expected a non-empty array of integers");
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    if (!seeds[k].is_number_unsigned()) {
      throw ConfigError(r.at("seeds") + "[" + std::to_string(k) + "]", "expected a non-negative integer");
    }
    rb.seeds.push_back(seeds[k].get<std::uint64_t>());
  }
  rb.iterations = r.count("iterations", rb.iterations);
  if (rb.iterations < 1) throw ConfigError(r.at("iterations"), "must be at least 1");
  rb.rho = r.number("rho", rb.rho);
  if (!(rb.rho >= 0.0)) throw ConfigError(r.at("rho"), "must be non-negative");
  const std::string kind = r.text("schedule", "constant");
  if (kind == "constant") {
    rb.schedule = ScheduleKind::constant;
  } else if (kind == "decaying") {
    rb.schedule = ScheduleKind::decaying;
  } else {
    throw ConfigError(r.at("schedule"), "expected 'constant' or 'decaying'");
  }
  rb.decay_ratio = r.number("decay_ratio", rb.decay_ratio);
  if (!(rb.decay_ratio >= 0.0 && rb.decay_ratio < 1.0)) throw ConfigError(r.at("decay_ratio"), "must lie in [0, 1)");
  return rb;
}

}  // namespace config_detail

inline ExperimentConfig parse_config(const nlohmann::json& root) {
  using config_detail::Reader;
  if (!root.is_object()) throw ConfigError("<root>", "expected a JSON object");
  const Reader r(root, "");
  ExperimentConfig cfg;
  cfg.model = config_detail::parse_model(r.child("model"));
  const Index n = cfg.model->n(), m = cfg.model->m(), p = cfg.model->p();
  if (r.has("solve")) config_detail::parse_solve(r.child("solve"), n, cfg.solve);
  if (r.has("sim")) {
    config_detail::parse_sim(r.child("sim"), n, cfg.sim);
  } else {
    cfg.sim.x0 = Vector::Ones(n);
  }
  if (r.has("learn")) cfg.learn = config_detail::parse_learn(r.child("learn"), n, m, p);
  if (r.has("robust")) cfg.robust = config_detail::parse_robust(r.child("robust"));
  cfg.output = r.text("output", cfg.output);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error& e) {
    throw ConfigError("<file>", e.what());
  }
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(root);
}

/// Human-readable description of the config format.
inline const char* config_schema_text() {
  return R"({
  "model": {                      required
    "n", "m", "p": int >= 1       state, control and disturbance dims
    "A": n x n, "A1": n x n (default 0), "B": n x m, "E": n x p
    "gamma": number > 0
    either "Q": n x n, "R": m x m  or  "C": q x n, "D": q x m  (Q = C^T C, R = D^T D, C^T D = 0)
  },
  "solve": {                      optional
    "P0": n x n                   initial value matrix; when absent the ramp c I, c = ramp_step, 2 ramp_step, ... is used
    "ramp": bool, "ramp_step": number (0.5), "ramp_attempts": int (40)
    "max_iter": int (50), "tol": number (1e-12)
  },
  "sim": {                        optional
    "x0": [n numbers] (ones), "n_paths": int (1), "seed": uint64 (0), "threads": int (0 = all cores)
    "t_end": number (1), "dt_fine": number (0.01)
    "exploration": { "kind": "sinusoids" | "white", "amplitude": number (0.1),
                     "n_sinusoids": int (10), "frequencies": [numbers] (seed-derived) }
  },
  "learn": {                      required by 'learn'
    "mode": "exact" | "montecarlo", "sampling": "ensemble" | "branching",
    "quadrature": "left" | "right" | "trapezoid"
    "iterations": int (20), "interval_width": number (0.5), "substeps": int (100),
    "intervals": int (0 = twice the number of unknowns), "start": number (0)
    "L0": m x n (0), "F0": p x n (0), "P0": n x n (recorded only), "stop_tol": number (0 = off)
  },
  "robust": {                     required by 'robust'
    "deltas": [numbers], "seeds": [uint64], "iterations": int (30), "rho": number (0.05),
    "schedule": "constant" | "decaying", "decay_ratio": number (0.1)
  },
  "output": string ("out")
})";
}

}  // namespace itohinf
