/// @file run.hpp
/// @brief Subcommand bodies: solve, adapt, optimize, replay, validate. Each
/// writes into an output directory that starts with the config echo.
#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "shapeopt/dwr/dwr.hpp"
#include "shapeopt/euler/io.hpp"
#include "shapeopt/harness/checks.hpp"
#include "shapeopt/harness/config.hpp"
#include "shapeopt/rl/td3.hpp"

namespace shapeopt::harness {

namespace fs = std::filesystem;

namespace detail {

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw IoError("cannot write " + p.string());
  return os;
}

inline void close_out(std::ofstream& os, const fs::path& p) {
  os.close();
  if (!os) throw IoError("error writing " + p.string());
}

template <class F>
void write_file(const fs::path& p, F&& body) {
  auto os = open_out(p);
  body(os);
  close_out(os, p);
}

}  // namespace detail

/// Creates the directory and writes config.cfg.
inline void prepare_output(const fs::path& out, const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory " + out.string());
  detail::write_file(out / "config.cfg", [&](std::ostream& os) { write_config(os, cfg); });
}

inline void write_forces_header(std::ostream& os) { os << "label,cells,newton_iterations,cd,cl\n"; }

inline void write_forces_row(std::ostream& os, const std::string& label, std::size_t cells, int iterations,
                             const euler::Forces& f) {
  os << label << ',' << cells << ',' << iterations << ',' << format_double(f.cd) << ',' << format_double(f.cl) << '\n';
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

struct SolveReport {
  euler::Forces forces;
  std::size_t cells = 0;
  int iterations = 0;
  double residual_norm = 0.0;
};

/// One flow solve on the baseline environment mesh.
/// Files: forces.csv, residual_history.csv, mesh.msh, solution.dat.
inline SolveReport run_solve(const RunConfig& cfg, const fs::path& out) {
  prepare_output(out, cfg);
  const rl::Environment env(cfg.env);
  const auto& m = env.initial().mesh;
  const euler::FvMesh fv(m);
  const auto& oc = cfg.env.objective;
  const auto sol = euler::newton_solve(fv, oc.freestream, oc.dwr.coarse_newton);
  SolveReport r{euler::compute_forces(fv, sol.field, oc.freestream), fv.num_cells(), sol.iterations, sol.residual_norm};
  detail::write_file(out / "forces.csv", [&](std::ostream& os) {
    write_forces_header(os);
    write_forces_row(os, "solve", r.cells, r.iterations, r.forces);
  });
  detail::write_file(out / "residual_history.csv", [&](std::ostream& os) { euler::write_history(os, sol.history); });
  mesh::save_mesh((out / "mesh.msh").string(), m);
  euler::save_solution((out / "solution.dat").string(), sol.field);
  return r;
}

// ---------------------------------------------------------------------------
// adapt
// ---------------------------------------------------------------------------

inline dwr::Functional adapt_functional(const RunConfig& cfg) {
  switch (cfg.env.objective.mode) {
    case rl::ObjectiveMode::drag:
      return dwr::Functional::drag;
    case rl::ObjectiveMode::ratio:
      return dwr::Functional::ratio;
    case rl::ObjectiveMode::surrogate:
      break;
  }
  throw ConfigError("adapt: objective 'surrogate' has no flow functional");
}

struct AdaptReport {
  dwr::DwrResult result;
  euler::Forces final_forces;
};

/// Adaptation loop on the baseline mesh, dwr.refine_steps steps.
/// Files: dwr_history.csv, forces.csv (coarse mesh of every step, then the
/// final mesh), mesh.msh, solution.dat.
inline AdaptReport run_adapt(const RunConfig& cfg, const fs::path& out) {
  const auto functional = adapt_functional(cfg);
  const auto& oc = cfg.env.objective;
  if (oc.refine_steps < 1) throw ConfigError("adapt: dwr.refine_steps must be >= 1");
  prepare_output(out, cfg);
  const rl::Environment env(cfg.env);
  AdaptReport r;
  r.result = dwr::dwr_adapt_loop(env.initial().mesh, oc.freestream, functional, oc.refine_steps, oc.dwr);
  const euler::FvMesh fv(r.result.mesh);
  r.final_forces = euler::compute_forces(fv, r.result.field, oc.freestream);
  detail::write_file(out / "dwr_history.csv", [&](std::ostream& os) { dwr::write_dwr_history(os, r.result.history); });
  detail::write_file(out / "forces.csv", [&](std::ostream& os) {
    write_forces_header(os);
    for (const auto& h : r.result.history)
      write_forces_row(os, "step" + std::to_string(h.step), h.cells_coarse, h.newton_iterations, {h.cd_coarse, h.cl_coarse});
    write_forces_row(os, "final", fv.num_cells(), r.result.final_newton_iterations, r.final_forces);
  });
  mesh::save_mesh((out / "mesh.msh").string(), r.result.mesh);
  euler::save_solution((out / "solution.dat").string(), r.result.field);
  return r;
}

// ---------------------------------------------------------------------------
// optimize
// ---------------------------------------------------------------------------

/// Plot-ready traces:
///   drag_trace.csv   x = environment step (0 = baseline), y = objective D
///   noise_trace.csv  x = epoch, y = noise coefficient
///   ratio_trace.csv  x = environment step, y = -D (lift/drag ratio in ratio
///                    mode); written for ratio and surrogate objectives
inline void emit_traces(const fs::path& out, const rl::TrainResult& res, rl::ObjectiveMode mode) {
  std::vector<std::pair<long, double>> d{{0, res.d0}};
  for (const auto& row : res.trace)
    if (!row.retry) d.emplace_back(row.step, row.state_d);
  detail::write_file(out / "drag_trace.csv", [&](std::ostream& os) {
    os << "x,y\n";
    for (const auto& [x, y] : d) os << x << ',' << format_double(y) << '\n';
  });
  detail::write_file(out / "noise_trace.csv", [&](std::ostream& os) {
    os << "x,y\n";
    int last = 0;
    for (const auto& row : res.trace)
      if (row.epoch > last) {
        last = row.epoch;
        os << row.epoch << ',' << format_double(row.noise_coeff) << '\n';
      }
  });
  if (mode != rl::ObjectiveMode::drag)
    detail::write_file(out / "ratio_trace.csv", [&](std::ostream& os) {
      os << "x,y\n";
      for (const auto& [x, y] : d) os << x << ',' << format_double(-y) << '\n';
    });
}

struct OptimizeReport {
  rl::TrainResult result;
  double seconds = 0.0;
};

/// Full training run. Files: trace.csv, drag/noise/ratio traces,
/// summary.csv, final_shape.dat and final_mesh.msh (best design),
/// last_shape.dat, checkpoint/.
inline OptimizeReport run_optimize(const RunConfig& cfg, const fs::path& out,
                                   const std::function<void(const rl::TraceRow&)>& on_row = {}) {
  prepare_output(out, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  rl::Environment env(cfg.env);
  rl::Trainer trainer(env, cfg.train, cfg.seed);
  OptimizeReport r;
  r.result = trainer.run(on_row);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto& res = r.result;
  detail::write_file(out / "trace.csv", [&](std::ostream& os) { rl::write_trace(os, res.trace); });
  emit_traces(out, res, cfg.env.objective.mode);
  detail::write_file(out / "summary.csv", [&](std::ostream& os) {
    os << "d0,best_d,last_d,best_cd,best_cl,updates,surrogate_minimum\n";
    os << format_double(res.d0) << ',' << format_double(res.best_d) << ',' << format_double(res.last.value.d) << ','
       << format_double(res.best.value.cd) << ',' << format_double(res.best.value.cl) << ',' << res.updates << ','
       << format_double(env.surrogate_minimum()) << '\n';
  });
  geometry::save_shape((out / "final_shape.dat").string(), res.best.shape);
  mesh::save_mesh((out / "final_mesh.msh").string(), res.best.mesh);
  geometry::save_shape((out / "last_shape.dat").string(), res.last.shape);
  trainer.save_checkpoint(out / "checkpoint");
  return r;
}

// ---------------------------------------------------------------------------
// replay
// ---------------------------------------------------------------------------

/// Re-evaluates a saved design shape under `cfg`. Files: replay.csv, mesh.msh.
inline rl::ObjectiveValue run_replay(const RunConfig& cfg, const fs::path& shape_file, const fs::path& out) {
  const auto shape = geometry::load_shape(shape_file.string());
  prepare_output(out, cfg);
  const rl::Environment env(cfg.env);
  const auto s = env.from_shape(shape);
  detail::write_file(out / "replay.csv", [&](std::ostream& os) {
    os << "shape,objective,d,cd,cl,cells,newton_iterations\n";
    os << shape_file.filename().string() << ',' << rl::to_string(cfg.env.objective.mode) << ',' << format_double(s.value.d)
       << ',' << format_double(s.value.cd) << ',' << format_double(s.value.cl) << ',' << s.value.cells << ','
       << s.value.newton_iterations << '\n';
  });
  mesh::save_mesh((out / "mesh.msh").string(), s.mesh);
  return s.value;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

/// Runs the invariant suite. File: validate.csv.
inline std::vector<CheckResult> run_validate(const RunConfig& cfg, const fs::path& out,
                                             const std::function<void(const CheckResult&)>& on_check = {}) {
  prepare_output(out, cfg);
  const auto results = invariant_suite(cfg, on_check);
  detail::write_file(out / "validate.csv", [&](std::ostream& os) {
    os << "check,pass,detail\n";
    for (const auto& c : results) os << c.name << ',' << (c.pass ? 1 : 0) << ",\"" << c.detail << "\"\n";
  });
  return results;
}

}  // namespace shapeopt::harness
