#pragma once

// CSV / JSON artifacts. Every floating-point value is written with 17
// significant digits so that doubles round-trip exactly.

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "itohinf/datamat.hpp"
#include "itohinf/errors.hpp"
#include "itohinf/gare_newton.hpp"
#include "itohinf/offpolicy.hpp"
#include "itohinf/robust.hpp"
#include "itohinf/sde.hpp"
#include "itohinf/symlin.hpp"

namespace itohinf::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Writes to a sibling temporary file and renames it into place.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) {
    for (std::size_t k = 0; k < header.size(); ++k) out_ << (k ? "," : "") << header[k];
    out_ << '\n';
  }

  CsvWriter& cell(const std::string& s) {
    sep();
    out_ << s;
    return *this;
  }
  CsvWriter& cell(double x) { return cell(format_double(x)); }
  CsvWriter& cell(std::size_t x) { return cell(std::to_string(x)); }
  CsvWriter& cell(std::uint64_t x, int) { return cell(std::to_string(x)); }
  CsvWriter& cells(const Eigen::Ref<const Vector>& v) {
    for (Index k = 0; k < v.size(); ++k) cell(v(k));
    return *this;
  }
  void end_row() {
    out_ << '\n';
    first_ = true;
  }

  std::string str() const { return out_.str(); }

 private:
  void sep() {
    if (!first_) out_ << ',';
    first_ = false;
  }
  std::ostringstream out_;
  bool first_ = true;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      t.rows.push_back(std::move(fields));
    }
  }
  return t;
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw Error("malformed number '" + s + "'");
  return v;
}

// ---------------------------------------------------------------------------
// JSON with 17-digit floats

namespace detail {

inline void dump_json(const json& j, std::string& out, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad + json(it.key()).dump() + ": ";
        dump_json(it.value(), out, indent, depth + 1);
      }
      out += "\n" + close_pad + "}";
      return;
    }
    case json::value_t::array: {
      const bool flat = std::none_of(j.begin(), j.end(), [](const json& e) { return e.is_structured(); });
      if (flat) {
        out += "[";
        for (std::size_t k = 0; k < j.size(); ++k) {
          if (k) out += ", ";
          dump_json(j[k], out, indent, depth + 1);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t k = 0; k < j.size(); ++k) {
        if (k) out += ",\n";
        out += pad;
        dump_json(j[k], out, indent, depth + 1);
      }
      out += "\n" + close_pad + "]";
      return;
    }
    case json::value_t::number_float: {
      const double x = j.get<double>();
      out += std::isfinite(x) ? format_double(x) : "null";
      return;
    }
    default: out += j.dump(); return;
  }
}

}  // namespace detail

inline std::string dump_json(const json& j) {
  std::string out;
  detail::dump_json(j, out, 2, 0);
  out += '\n';
  return out;
}

inline json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (Index k = 0; k < v.size(); ++k) arr.push_back(v(k));
  return arr;
}

inline Matrix matrix_from_json(const json& j, Index rows, Index cols, const std::string& where) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows) {
    throw Error(where + ": expected " + std::to_string(rows) + " rows");
  }
  Matrix M(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      throw Error(where + "[" + std::to_string(r) + "]: expected " + std::to_string(cols) + " columns");
    }
    for (Index c = 0; c < cols; ++c) {
      const json& e = row[static_cast<std::size_t>(c)];
      if (!e.is_number()) throw Error(where + "[" + std::to_string(r) + "][" + std::to_string(c) + "]: not a number");
      M(r, c) = e.get<double>();
    }
  }
  return M;
}

// ---------------------------------------------------------------------------
// trajectory bundles

inline const char* exploration_kind_name(ExplorationKind k) {
  return k == ExplorationKind::white ? "white" : "sinusoids";
}

inline json sim_config_to_json(const SimConfig& cfg) {
  json j;
  j["x0"] = vector_to_json(cfg.x0);
  j["t_end"] = cfg.t_end;
  j["dt_fine"] = cfg.dt_fine;
  j["n_paths"] = cfg.n_paths;
  j["seed"] = cfg.seed;
  j["exploration"] = {{"kind", exploration_kind_name(cfg.exploration.kind)},
                      {"amplitude", cfg.exploration.amplitude},
                      {"n_sinusoids", cfg.exploration.n_sinusoids},
                      {"frequencies", cfg.exploration.frequencies}};
  return j;
}

inline SimConfig sim_config_from_json(const json& j) {
  SimConfig cfg;
  const auto& x0 = j.at("x0");
  cfg.x0.resize(static_cast<Index>(x0.size()));
  for (std::size_t k = 0; k < x0.size(); ++k) cfg.x0(static_cast<Index>(k)) = x0[k].get<double>();
  cfg.t_end = j.at("t_end").get<double>();
  cfg.dt_fine = j.at("dt_fine").get<double>();
  cfg.n_paths = j.at("n_paths").get<std::size_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  const auto& e = j.at("exploration");
  cfg.exploration.kind = e.at("kind").get<std::string>() == "white" ? ExplorationKind::white : ExplorationKind::sinusoids;
  cfg.exploration.amplitude = e.at("amplitude").get<double>();
  cfg.exploration.n_sinusoids = e.at("n_sinusoids").get<int>();
  cfg.exploration.frequencies = e.at("frequencies").get<std::vector<double>>();
  return cfg;
}

namespace detail {

inline std::string series_csv(const TrajectoryBatch& b, const std::vector<Matrix>& series, const std::string& prefix) {
  const Index width = series.empty() ? 0 : series.front().rows();
  std::vector<std::string> header{"path", "step", "t"};
  for (Index c = 0; c < width; ++c) header.push_back(prefix + "_" + std::to_string(c));
  CsvWriter w(header);
  for (std::size_t l = 0; l < series.size(); ++l) {
    for (std::size_t k = 0; k <= b.steps; ++k) {
      w.cell(l).cell(k).cell(b.time(k)).cells(series[l].col(static_cast<Index>(k)));
      w.end_row();
    }
  }
  return w.str();
}

inline std::vector<Matrix> series_from_csv(const std::string& text, std::size_t paths, std::size_t steps) {
  const CsvTable t = parse_csv(text);
  if (t.header.size() < 3) throw Error("trajectory csv: missing columns");
  const auto width = static_cast<Index>(t.header.size() - 3);
  std::vector<Matrix> out(paths, Matrix(width, static_cast<Index>(steps + 1)));
  if (t.rows.size() != paths * (steps + 1)) throw Error("trajectory csv: row count does not match sidecar");
  for (const auto& row : t.rows) {
    if (row.size() != t.header.size()) throw Error("trajectory csv: ragged row");
    const auto l = std::stoull(row[0]);
    const auto k = std::stoull(row[1]);
    if (l >= paths || k > steps) throw Error("trajectory csv: index out of range");
    for (Index c = 0; c < width; ++c) out[l](c, static_cast<Index>(k)) = parse_double(row[static_cast<std::size_t>(c) + 3]);
  }
  return out;
}

}  // namespace detail

/// states.csv, controls.csv, disturbances.csv and batch.json in dir.
inline void write_batch(const fs::path& dir, const TrajectoryBatch& b) {
  json side;
  side["format"] = "itohinf-batch-v1";
  side["n_paths"] = b.n_paths();
  side["steps"] = b.steps;
  side["t0"] = b.t0;
  side["dt"] = b.dt;
  side["seed"] = b.config.seed;
  side["config"] = sim_config_to_json(b.config);
  side["behavior"] = {{"L", matrix_to_json(b.behavior.L)}, {"F", matrix_to_json(b.behavior.F)}};
  write_file_atomic(dir / "states.csv", detail::series_csv(b, b.states, "x"));
  write_file_atomic(dir / "controls.csv", detail::series_csv(b, b.controls, "u"));
  write_file_atomic(dir / "disturbances.csv", detail::series_csv(b, b.disturbances, "v"));
  write_file_atomic(dir / "batch.json", dump_json(side));
}

inline TrajectoryBatch read_batch(const fs::path& dir) {
  const json side = json::parse(read_file(dir / "batch.json"));
  if (side.value("format", "") != "itohinf-batch-v1") throw Error("batch.json: unknown format");
  TrajectoryBatch b;
  const auto paths = side.at("n_paths").get<std::size_t>();
  b.steps = side.at("steps").get<std::size_t>();
  b.t0 = side.at("t0").get<double>();
  b.dt = side.at("dt").get<double>();
  b.config = sim_config_from_json(side.at("config"));
  b.states = detail::series_from_csv(read_file(dir / "states.csv"), paths, b.steps);
  b.controls = detail::series_from_csv(read_file(dir / "controls.csv"), paths, b.steps);
  b.disturbances = detail::series_from_csv(read_file(dir / "disturbances.csv"), paths, b.steps);
  const Index n = b.states.empty() ? 0 : b.states.front().rows();
  const Index m = b.controls.empty() ? 0 : b.controls.front().rows();
  const Index p = b.disturbances.empty() ? 0 : b.disturbances.front().rows();
  const json& beh = side.at("behavior");
  b.behavior.L = matrix_from_json(beh.at("L"), m, n, "behavior.L");
  b.behavior.F = matrix_from_json(beh.at("F"), p, n, "behavior.F");
  return b;
}

// ---------------------------------------------------------------------------
// tables

inline std::string matrix_csv(const Matrix& M) {
  std::vector<std::string> header;
  for (Index c = 0; c < M.cols(); ++c) header.push_back("c" + std::to_string(c));
  CsvWriter w(header);
  for (Index r = 0; r < M.rows(); ++r) {
    w.cells(M.row(r).transpose());
    w.end_row();
  }
  return w.str();
}

inline void write_data_matrices(const fs::path& dir, const DataMatrices& dm) {
  write_file_atomic(dir / "delta_xt.csv", matrix_csv(dm.delta_xt));
  write_file_atomic(dir / "i_xt.csv", matrix_csv(dm.i_xt));
  write_file_atomic(dir / "i_xx.csv", matrix_csv(dm.i_xx));
  write_file_atomic(dir / "i_xu.csv", matrix_csv(dm.i_xu));
  write_file_atomic(dir / "i_xv.csv", matrix_csv(dm.i_xv));
}

inline std::string spu_trace_csv(const SpuTrace& trace) {
  const Index d = trace.iterates.empty() ? 0 : triangular_dim(trace.iterates.front().P.dim());
  std::vector<std::string> header{"i", "residual_norm", "error_to_ref"};
  for (Index k = 0; k < d; ++k) header.push_back("P_vecs_" + std::to_string(k));
  CsvWriter w(header);
  for (const SpuIterate& it : trace.iterates) {
    w.cell(it.index).cell(it.residual_norm).cell(it.error_to_ref.value_or(std::numeric_limits<double>::quiet_NaN()));
    w.cells(vecs(it.P));
    w.end_row();
  }
  return w.str();
}

struct LearnReference {
  SymMat P;
  PolicyPair gains;
};

inline std::string learn_trace_csv(const LearnTrace& trace, const std::optional<LearnReference>& ref) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CsvWriter w({"i", "p_error", "l_error", "f_error", "ls_residual"});
  for (const LearnStep& s : trace.steps) {
    w.cell(s.index);
    w.cell(ref && s.P ? (*s.P - ref->P).norm() : nan);
    w.cell(ref ? (s.gains.L - ref->gains.L).norm() : nan);
    w.cell(ref ? (s.gains.F - ref->gains.F).norm() : nan);
    w.cell(s.ls_residual);
    w.end_row();
  }
  return w.str();
}

inline std::string iss_sweep_csv(const std::vector<IssRun>& runs) {
  CsvWriter w({"delta", "seed", "iteration", "error_norm"});
  for (const IssRun& r : runs) {
    for (std::size_t i = 0; i < r.errors.size(); ++i) {
      w.cell(r.delta).cell(r.seed, 0).cell(i).cell(r.errors[i]);
      w.end_row();
    }
  }
  return w.str();
}

inline std::string ms_decay_csv(const std::vector<MomentSample>& curve) {
  CsvWriter w({"t", "mean_sq_norm"});
  for (const MomentSample& s : curve) {
    w.cell(s.t).cell(s.mean_sq_norm);
    w.end_row();
  }
  return w.str();
}

inline json solution_json(const SymMat& P, const PolicyPair& gains, double residual, std::size_t iterations) {
  return {{"n", P.dim()},
          {"P", matrix_to_json(P.matrix())},
          {"L", matrix_to_json(gains.L)},
          {"F", matrix_to_json(gains.F)},
          {"residual_norm", residual},
          {"iterations", iterations}};
}

/// Column layout of every CSV artifact.
inline std::map<std::string, std::string> csv_schemas() {
  return {
      {"spu_trace.csv", "i,residual_norm,error_to_ref,P_vecs_0..P_vecs_{n(n+1)/2-1}"},
      {"learn_trace.csv", "i,p_error,l_error,f_error,ls_residual"},
      {"iss_sweep.csv", "delta,seed,iteration,error_norm"},
      {"ms_decay.csv", "t,mean_sq_norm"},
      {"batch/states.csv", "path,step,t,x_0..x_{n-1}"},
      {"batch/controls.csv", "path,step,t,u_0..u_{m-1}"},
      {"batch/disturbances.csv", "path,step,t,v_0..v_{p-1}"},
      {"data/{delta_xt,i_xt,i_xx,i_xu,i_xv}.csv", "c0..c{cols-1}, one row per interval"},
  };
}

}  // namespace itohinf::io
