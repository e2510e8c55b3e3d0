// itohinf: experiment runner.
//
//   itohinf solve    --config cfg.json [--out DIR]
//   itohinf learn    --config cfg.json [--out DIR] [--seed S] [--mode exact|montecarlo]
//   itohinf robust   --config cfg.json [--out DIR]
//   itohinf simulate --config cfg.json [--out DIR] [--seed S]
//   itohinf print-schema
//
// Exit codes: 0 success, 2 config error, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "itohinf/itohinf.hpp"

namespace fs = std::filesystem;
using namespace itohinf;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string mode;
};

fs::path out_dir(const Options& o, const ExperimentConfig& cfg) { return o.out.empty() ? fs::path(cfg.output) : fs::path(o.out); }

ExperimentConfig load(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config", "a config file is required");
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) cfg.sim.seed = *o.seed;
  if (!o.mode.empty()) {
    if (!cfg.learn) throw ConfigError("learn", "--mode given but the config has no learn block");
    cfg.learn->mode = o.mode == "exact" ? LearnMode::exact : LearnMode::montecarlo;
  }
  return cfg;
}

SpuTrace solve_model(const ExperimentConfig& cfg) {
  SpuOptions opt;
  opt.max_iter = cfg.solve.max_iter;
  opt.tol = cfg.solve.tol;
  if (cfg.solve.P0 && !cfg.solve.ramp) return run_spu(cfg.system(), SymMat(*cfg.solve.P0), opt);
  if (cfg.solve.P0) {
    try {
      return run_spu(cfg.system(), SymMat(*cfg.solve.P0), opt);
    } catch (const Error&) {
    }
  }
  return run_spu_with_ramp(cfg.system(), opt, cfg.solve.ramp_options);
}

std::string fmt(double x) { return io::format_double(x); }

int cmd_solve(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const fs::path dir = out_dir(o, cfg);
  const SpuTrace trace = solve_model(cfg);
  const SpuIterate& last = trace.last();
  const PolicyPair gains = gains_from_value(cfg.system(), last.P);
  io::write_file_atomic(dir / "spu_trace.csv", io::spu_trace_csv(trace));
  io::write_file_atomic(dir / "P_star.json",
                        io::dump_json(io::solution_json(last.P, gains, last.residual_norm, last.index)));
  std::cout << "iterations: " << last.index << "\n"
            << "residual_norm: " << fmt(last.residual_norm) << "\n"
            << "P:\n";
  for (Index r = 0; r < last.P.dim(); ++r) {
    for (Index c = 0; c < last.P.dim(); ++c) std::cout << (c ? " " : "  ") << fmt(last.P(r, c));
    std::cout << "\n";
  }
  return 0;
}

void print_rank(const RankReport& rank) {
  std::cout << "rank condition: rank([Xt, U, V]) = " << rank.rank << " / " << rank.expected
            << (rank.ok ? " (satisfied)" : " (FAILED)") << ", sigma_min/sigma_max = " << fmt(rank.ratio) << "\n";
}

int cmd_learn(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const fs::path dir = out_dir(o, cfg);
  const LearnConfig lc = cfg.learn_config();
  LearnTrace trace;
  try {
    trace = run_learning(cfg.system(), lc);
  } catch (const RankDeficient& e) {
    std::cerr << "rank condition: rank = " << e.rank << " / " << e.expected << " (FAILED)\n";
    throw;
  }
  print_rank(trace.rank);

  std::optional<io::LearnReference> ref;
  try {
    const SpuTrace spu = solve_model(cfg);
    ref = io::LearnReference{spu.last().P, gains_from_value(cfg.system(), spu.last().P)};
  } catch (const Error& e) {
    std::cerr << "note: model-based reference unavailable (" << e.what() << "); error columns are nan\n";
  }

  io::write_file_atomic(dir / "learn_trace.csv", io::learn_trace_csv(trace, ref));
  io::write_data_matrices(dir / "data", trace.data);
  if (trace.batch) io::write_batch(dir / "batch", *trace.batch);
  io::write_file_atomic(dir / "P_hat.json", io::dump_json(io::solution_json(trace.P_final(), trace.gains_final(),
                                                                            trace.steps.back().ls_residual,
                                                                            trace.steps.back().index)));
  std::cout << "iterations: " << trace.steps.back().index << "\n";
  if (ref) std::cout << "p_error: " << fmt((trace.P_final() - ref->P).norm()) << "\n";
  return 0;
}

int cmd_robust(const Options& o) {
  const ExperimentConfig cfg = load(o);
  if (!cfg.robust) throw ConfigError("robust", "block is required for this command");
  const fs::path dir = out_dir(o, cfg);
  const SpuTrace spu = solve_model(cfg);
  const SymMat& P_star = spu.last().P;
  IssSweepConfig sweep;
  sweep.deltas = cfg.robust->deltas;
  sweep.seeds = cfg.robust->seeds;
  sweep.iterations = cfg.robust->iterations;
  sweep.rho = cfg.robust->rho;
  sweep.kind = cfg.robust->schedule;
  sweep.decay_ratio = cfg.robust->decay_ratio;
  const std::vector<IssRun> runs = iss_sweep(cfg.system(), P_star, sweep);
  io::write_file_atomic(dir / "iss_sweep.csv", io::iss_sweep_csv(runs));
  std::cout << "delta,seed,plateau\n";
  for (const IssRun& r : runs) std::cout << fmt(r.delta) << "," << r.seed << "," << fmt(plateau(r.errors)) << "\n";
  return 0;
}

int cmd_simulate(const Options& o) {
  const ExperimentConfig cfg = load(o);
  const fs::path dir = out_dir(o, cfg);
  const PolicyPair gains = cfg.learn ? cfg.learn->initial_gains
                                     : PolicyPair{Matrix::Zero(cfg.system().m(), cfg.system().n()),
                                                  Matrix::Zero(cfg.system().p(), cfg.system().n())};
  const TrajectoryBatch batch = simulate_batch(cfg.system(), gains, cfg.sim);
  io::write_batch(dir / "batch", batch);
  const std::vector<MomentSample> curve = ms_decay_probe(batch);
  io::write_file_atomic(dir / "ms_decay.csv", io::ms_decay_csv(curve));
  std::cout << "paths: " << batch.n_paths() << ", steps: " << batch.steps << "\n"
            << "mean_sq_norm: " << fmt(curve.front().mean_sq_norm) << " -> " << fmt(curve.back().mean_sq_norm) << "\n";
  return 0;
}

int cmd_print_schema() {
  std::cout << "config (JSON):\n" << config_schema_text() << "\n\ncsv headers:\n";
  for (const auto& [file, header] : io::csv_schemas()) std::cout << "  " << file << ": " << header << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic H-infinity control: model-based SPU, off-policy learning and robustness sweeps"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config (JSON)")->required();
    sub->add_option("--out", o.out, "output directory (overrides config 'output')");
  };
  auto add_seed = [&o](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>("--seed", [&o](const std::uint64_t& s) { o.seed = s; },
                                            "master seed (overrides sim.seed)");
  };

  CLI::App* solve = app.add_subcommand("solve", "model-based SPU iteration");
  add_common(solve);
  CLI::App* learn = app.add_subcommand("learn", "off-policy learning from simulated data");
  add_common(learn);
  add_seed(learn);
  learn->add_option("--mode", o.mode, "exact or montecarlo")->check(CLI::IsMember({"exact", "montecarlo"}));
  CLI::App* robust = app.add_subcommand("robust", "robust SPU error sweep");
  add_common(robust);
  CLI::App* simulate = app.add_subcommand("simulate", "simulate a trajectory batch");
  add_common(simulate);
  add_seed(simulate);
  app.add_subcommand("print-schema", "print the config schema and CSV headers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*solve) return cmd_solve(o);
    if (*learn) return cmd_learn(o);
    if (*robust) return cmd_robust(o);
    if (*simulate) return cmd_simulate(o);
    return cmd_print_schema();
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}
