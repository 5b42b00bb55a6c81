/// @file dwr.hpp
/// @brief Discrete adjoint, dual-weighted residual estimate of a force
/// functional, per-element indicators with an automatic threshold, and the
/// adaptation loop built on them.
#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "shapeopt/euler/solver.hpp"
#include "shapeopt/mesh/refine.hpp"

namespace shapeopt::dwr {

using euler::FlowField;
using euler::FreeStream;
using euler::FvMesh;
using euler::SparseMatrix;

enum class Functional { drag, lift, ratio };

inline Functional parse_functional(const std::string& s) {
  if (s == "drag") return Functional::drag;
  if (s == "lift") return Functional::lift;
  if (s == "ratio") return Functional::ratio;
  throw ConfigError("unknown functional '" + s + "' (drag|lift|ratio)");
}

inline double functional_value(const FvMesh& fv, const FlowField& f, const FreeStream& fs, Functional j) {
  const auto forces = euler::compute_forces(fv, f, fs);
  switch (j) {
    case Functional::drag: return forces.cd;
    case Functional::lift: return forces.cl;
    case Functional::ratio: return euler::lift_drag_ratio(forces);
  }
  return 0.0;
}

/// dJ/du, cell after cell. Only cells with a wall edge are nonzero.
inline Eigen::VectorXd functional_gradient(const FvMesh& fv, const FlowField& f, const FreeStream& fs, Functional j) {
  euler::check_physical(f, fs.gamma);
  Eigen::VectorXd gd = Eigen::VectorXd::Zero(f.u.size());
  Eigen::VectorXd gl = Eigen::VectorXd::Zero(f.u.size());
  const double q = fs.dynamic_pressure();
  const Vec2 d = fs.drag_dir();
  const Vec2 l = fs.lift_dir();
  for (const auto& face : fv.faces) {
    if (face.kind != euler::FaceKind::wall) continue;
    const Eigen::Vector4d dp = euler::pressure_gradient(f.cell(static_cast<std::size_t>(face.left)), fs.gamma).transpose();
    gd.segment<4>(4 * face.left) += (face.length * dot(face.normal, d) / q) * dp;
    gl.segment<4>(4 * face.left) += (face.length * dot(face.normal, l) / q) * dp;
  }
  switch (j) {
    case Functional::drag: return gd;
    case Functional::lift: return gl;
    case Functional::ratio: {
      const auto forces = euler::compute_forces(fv, f, fs);
      if (std::abs(forces.cd) < 1e-12) throw DomainError("functional_gradient: drag coefficient is zero");
      return (gl * forces.cd - forces.cl * gd) / (forces.cd * forces.cd);
    }
  }
  return gd;
}

/// Piecewise-constant injection: every fine cell takes its parent's state.
inline FlowField prolongate(const FlowField& coarse, const std::vector<int>& parent_map) {
  FlowField fine;
  fine.u.resize(static_cast<Eigen::Index>(4 * parent_map.size()));
  for (std::size_t c = 0; c < parent_map.size(); ++c) {
    const int p = parent_map[c];
    if (p < 0 || static_cast<std::size_t>(p) >= coarse.num_cells()) throw DomainError("prolongate: parent out of range");
    fine.set_cell(c, coarse.cell(static_cast<std::size_t>(p)));
  }
  return fine;
}

/// Solves jacobian^T z = g to relative residual tol, refining iteratively
/// up to three times. Throws SolverError if the tolerance is not met.
inline Eigen::VectorXd solve_adjoint(const SparseMatrix& jacobian, const Eigen::VectorXd& g, double tol = 1e-8) {
  if (jacobian.rows() != jacobian.cols() || jacobian.rows() != g.size()) throw DomainError("solve_adjoint: size mismatch");
  const double gn = g.norm();
  if (gn == 0.0) return Eigen::VectorXd::Zero(g.size());
  const SparseMatrix at = jacobian.transpose();
  euler::SparseDirectSolver lin;
  lin.factorize(at);
  Eigen::VectorXd z = lin.solve(g);
  std::vector<double> hist;
  for (int k = 0;; ++k) {
    const Eigen::VectorXd res = g - at * z;
    const double rel = res.norm() / gn;
    hist.push_back(rel);
    if (rel <= tol) return z;
    if (k == 3) throw SolverError("solve_adjoint: relative residual " + format_double(rel) + " above tolerance", hist);
    z += lin.solve(res);
  }
}

struct Correction {
  double value = 0.0;       // J - z.R
  double correction = 0.0;  // z.R
};

inline Correction corrected_functional(double j_prolonged, const Eigen::VectorXd& z, const Eigen::VectorXd& residual) {
  if (z.size() != residual.size()) throw DomainError("corrected_functional: size mismatch");
  const double c = z.dot(residual);
  return {j_prolonged - c, c};
}

struct ErrorIndicators {
  std::vector<double> eta;  // per coarse triangle
  double tol = 0.0;
  double correction = 0.0;  // z.R summed over the fine mesh
};

/// eta_K = sum over the fine children of K of |z_c . R_c|.
inline ErrorIndicators error_indicators(const Eigen::VectorXd& z, const Eigen::VectorXd& residual,
                                        const std::vector<int>& parent_map, std::size_t n_coarse) {
  if (z.size() != residual.size() || static_cast<std::size_t>(z.size()) != 4 * parent_map.size())
    throw DomainError("error_indicators: size mismatch");
  ErrorIndicators e;
  e.eta.assign(n_coarse, 0.0);
  for (std::size_t c = 0; c < parent_map.size(); ++c) {
    const auto i = static_cast<Eigen::Index>(4 * c);
    const double zr = z.segment<4>(i).dot(residual.segment<4>(i));
    e.correction += zr;
    const int p = parent_map[c];
    if (p < 0 || static_cast<std::size_t>(p) >= n_coarse) throw DomainError("error_indicators: parent out of range");
    e.eta[static_cast<std::size_t>(p)] += std::abs(zr);
  }
  return e;
}

/// exp(mean + k * std) of log(eta + 1e-30). Population standard deviation.
inline double auto_tol(const std::vector<double>& eta, double k = 1.0) {
  if (eta.empty()) throw DomainError("auto_tol: no indicators");
  constexpr double floor = 1e-30;
  double mean = 0.0;
  for (double e : eta) mean += std::log(e + floor);
  mean /= static_cast<double>(eta.size());
  double var = 0.0;
  for (double e : eta) var += (std::log(e + floor) - mean) * (std::log(e + floor) - mean);
  var /= static_cast<double>(eta.size());
  return std::exp(mean + k * std::sqrt(var));
}

/// Elements with eta strictly above tol, ascending.
inline std::vector<int> mark_above(const std::vector<double>& eta, double tol) {
  std::vector<int> out;
  for (std::size_t i = 0; i < eta.size(); ++i)
    if (eta[i] > tol) out.push_back(static_cast<int>(i));
  return out;
}

// ---------------------------------------------------------------------------
// Adaptation loop
// ---------------------------------------------------------------------------

struct DwrOptions {
  euler::NewtonOptions coarse_newton{};
  /// Newton budget for the fine-mesh reference solve; 0 skips it.
  int fine_newton_iters = 4;
  double adjoint_tol = 1e-8;
  double tol_k = 1.0;
  /// Refinement stops adding cells beyond this coarse size (0 = no cap).
  std::size_t max_cells = 0;
};

struct DwrStep {
  int step = 0;
  std::size_t cells_coarse = 0;
  std::size_t cells_fine = 0;
  double j_coarse = 0.0;       // on the coarse mesh
  double cd_coarse = 0.0;      // coarse-mesh force coefficients
  double cl_coarse = 0.0;
  double j_uncorrected = 0.0;  // fine mesh, prolonged state
  double correction = 0.0;
  double j_corrected = 0.0;
  double j_fine = std::nan("");  // fine-mesh solve, NaN when skipped
  double tol = 0.0;
  std::size_t marked = 0;
  int newton_iterations = 0;
};

struct DwrResult {
  mesh::UnstructuredMesh mesh;  // after the last refinement
  FlowField field;              // converged on `mesh`
  double value = 0.0;           // functional on `mesh`
  double corrected = 0.0;       // last step's corrected functional
  int final_newton_iterations = 0;
  std::vector<DwrStep> history;
};

/// Per step: solve on the coarse mesh, refine uniformly, inject, take the
/// fine residual, optionally run a capped fine solve, solve the dual at the
/// injected state, correct the functional, compute indicators, threshold
/// them and refine the marked elements. After the last step the final mesh
/// is solved once more. SolverError from any solve names the step.
inline DwrResult dwr_adapt_loop(mesh::UnstructuredMesh coarse, const FreeStream& fs, Functional functional,
                                int refine_steps, const DwrOptions& opts = {}) {
  if (refine_steps < 1) throw DomainError("dwr_adapt_loop: refine_steps must be >= 1");
  auto fail = [](int step, const SolverError& e) {
    return SolverError("adaptation step " + std::to_string(step) + ": " + e.what(), e.history());
  };
  DwrResult out;
  FvMesh fv(coarse);
  FlowField start = euler::uniform_field(fv.num_cells(), fs);
  for (int step = 1; step <= refine_steps; ++step) {
    DwrStep row;
    row.step = step;
    euler::NewtonResult coarse_sol;
    try {
      coarse_sol = euler::newton_solve(fv, start, fs, opts.coarse_newton);
    } catch (const SolverError& e) {
      throw fail(step, e);
    }
    row.newton_iterations = coarse_sol.iterations;
    row.cells_coarse = fv.num_cells();
    row.j_coarse = functional_value(fv, coarse_sol.field, fs, functional);
    const auto forces = euler::compute_forces(fv, coarse_sol.field, fs);
    row.cd_coarse = forces.cd;
    row.cl_coarse = forces.cl;

    const auto h = mesh::uniform_refine(coarse);
    const FvMesh fine(h.fine);
    row.cells_fine = fine.num_cells();
    const FlowField prolonged = prolongate(coarse_sol.field, h.parent_map);
    const auto residual = euler::assemble_residual(fine, prolonged, fs);
    row.j_uncorrected = functional_value(fine, prolonged, fs, functional);
    if (opts.fine_newton_iters > 0) {
      auto fo = opts.coarse_newton;
      fo.max_iter = opts.fine_newton_iters;
      fo.throw_on_max_iter = false;
      try {
        const auto fine_sol = euler::newton_solve(fine, prolonged, fs, fo);
        row.j_fine = functional_value(fine, fine_sol.field, fs, functional);
      } catch (const SolverError& e) {
        throw fail(step, e);
      }
    }
    Eigen::VectorXd z;
    try {
      z = solve_adjoint(euler::assemble_jacobian(fine, prolonged, fs), functional_gradient(fine, prolonged, fs, functional),
                        opts.adjoint_tol);
    } catch (const SolverError& e) {
      throw fail(step, e);
    }
    const auto corr = corrected_functional(row.j_uncorrected, z, residual);
    row.correction = corr.correction;
    row.j_corrected = corr.value;

    auto ind = error_indicators(z, residual, h.parent_map, fv.num_cells());
    ind.tol = auto_tol(ind.eta, opts.tol_k);
    row.tol = ind.tol;
    auto marked = mark_above(ind.eta, ind.tol);
    if (opts.max_cells > 0 && fv.num_cells() >= opts.max_cells) marked.clear();
    row.marked = marked.size();
    out.history.push_back(row);
    out.corrected = row.j_corrected;

    const auto refined = mesh::refine_marked_map(coarse, marked);
    start = prolongate(coarse_sol.field, refined.parent_map);
    coarse = refined.mesh;
    fv = FvMesh(coarse);
  }
  try {
    auto sol = euler::newton_solve(fv, start, fs, opts.coarse_newton);
    out.value = functional_value(fv, sol.field, fs, functional);
    out.final_newton_iterations = sol.iterations;
    out.field = std::move(sol.field);
  } catch (const SolverError& e) {
    throw fail(refine_steps + 1, e);
  }
  out.mesh = std::move(coarse);
  return out;
}

inline void write_dwr_history(std::ostream& os, const std::vector<DwrStep>& rows) {
  os << "step,cells_coarse,cells_fine,J_uncorrected,correction,J_corrected,TOL,marked\n";
  for (const auto& r : rows)
    os << r.step << ',' << r.cells_coarse << ',' << r.cells_fine << ',' << format_double(r.j_uncorrected) << ','
       << format_double(r.correction) << ',' << format_double(r.j_corrected) << ',' << format_double(r.tol) << ','
       << r.marked << '\n';
}

}  // namespace shapeopt::dwr
