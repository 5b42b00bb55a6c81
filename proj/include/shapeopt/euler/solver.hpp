/// @file solver.hpp
/// @brief First-order cell-centered finite-volume discretization on a
/// triangular mesh, steady Newton solver with pseudo-transient continuation,
/// and pressure forces on the airfoil.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "shapeopt/euler/flux.hpp"
#include "shapeopt/euler/linear.hpp"
#include "shapeopt/mesh/mesh.hpp"

namespace shapeopt::euler {

enum class FaceKind { interior, wall, farfield };

/// One mesh edge seen from its left cell. The normal points out of `left`.
struct Face {
  int left = -1;
  int right = -1;  // -1 on the boundary
  FaceKind kind = FaceKind::interior;
  Vec2 normal;
  double length = 0.0;
};

/// Face list and cell areas of a triangular mesh. Boundary edges between two
/// airfoil vertices are walls; every other boundary edge is far field.
struct FvMesh {
  std::vector<Face> faces;
  std::vector<double> areas;

  FvMesh() = default;
  explicit FvMesh(const mesh::UnstructuredMesh& m) {
    const auto adj = mesh::build_adjacency(m);
    if (adj.nonmanifold_edges != 0) throw GeometryError("FvMesh: mesh is not edge-manifold");
    areas.resize(m.triangles.size());
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
      areas[t] = mesh::signed_area(m, t);
      if (!(areas[t] > 0.0)) throw GeometryError("FvMesh: inverted triangle " + std::to_string(t));
      for (int k = 0; k < 3; ++k) {
        const int nb = adj.neighbor[t][static_cast<std::size_t>(k)];
        if (nb >= 0 && nb < static_cast<int>(t)) continue;
        const int a = m.triangles[t][static_cast<std::size_t>(k)];
        const int b = m.triangles[t][static_cast<std::size_t>((k + 1) % 3)];
        const Vec2 e = m.vertices[static_cast<std::size_t>(b)] - m.vertices[static_cast<std::size_t>(a)];
        Face f;
        f.left = static_cast<int>(t);
        f.right = nb;
        f.length = norm(e);
        f.normal = Vec2{e.y, -e.x} * (1.0 / f.length);
        if (nb < 0) f.kind = (m.is_airfoil(a) && m.is_airfoil(b)) ? FaceKind::wall : FaceKind::farfield;
        faces.push_back(f);
      }
    }
  }

  std::size_t num_cells() const noexcept { return areas.size(); }
};

/// Per-cell conservative states stored cell after cell in one vector.
struct FlowField {
  Eigen::VectorXd u;

  std::size_t num_cells() const noexcept { return static_cast<std::size_t>(u.size() / 4); }
  State cell(std::size_t i) const { return u.segment<4>(static_cast<Eigen::Index>(4 * i)); }
  void set_cell(std::size_t i, const State& s) { u.segment<4>(static_cast<Eigen::Index>(4 * i)) = s; }
};

inline FlowField uniform_field(std::size_t n_cells, const FreeStream& fs) {
  FlowField f;
  f.u.resize(static_cast<Eigen::Index>(4 * n_cells));
  const State s = freestream_state(fs);
  for (std::size_t i = 0; i < n_cells; ++i) f.set_cell(i, s);
  return f;
}

/// Throws StateError naming the first non-physical cell.
inline void check_physical(const FlowField& f, double gamma = kGamma) {
  for (std::size_t i = 0; i < f.num_cells(); ++i)
    if (!is_physical(f.cell(i), gamma))
      throw StateError("non-physical state in cell " + std::to_string(i), static_cast<long>(i));
}

inline bool all_physical(const FlowField& f, double gamma = kGamma) noexcept {
  for (std::size_t i = 0; i < f.num_cells(); ++i)
    if (!is_physical(f.cell(i), gamma)) return false;
  return true;
}

namespace detail {
inline void check_sizes(const FvMesh& fv, const FlowField& f) {
  if (f.num_cells() != fv.num_cells() || f.u.size() % 4 != 0) throw DomainError("flow field does not match the mesh");
}
}  // namespace detail

/// Residual: per cell, the sum over its edges of the outward numerical flux
/// times edge length.
using Residual = Eigen::VectorXd;

inline Residual assemble_residual(const FvMesh& fv, const FlowField& f, const FreeStream& fs) {
  detail::check_sizes(fv, f);
  check_physical(f, fs.gamma);
  Residual r = Residual::Zero(f.u.size());
  for (const auto& face : fv.faces) {
    const State ul = f.cell(static_cast<std::size_t>(face.left));
    State h;
    switch (face.kind) {
      case FaceKind::interior: h = numerical_flux(ul, f.cell(static_cast<std::size_t>(face.right)), face.normal, fs.gamma); break;
      case FaceKind::wall: h = wall_flux(ul, face.normal, fs.gamma); break;
      case FaceKind::farfield: h = farfield_flux(ul, fs, face.normal); break;
    }
    h *= face.length;
    r.segment<4>(4 * face.left) += h;
    if (face.right >= 0) r.segment<4>(4 * face.right) -= h;
  }
  return r;
}

inline double max_norm(const Eigen::VectorXd& v) noexcept { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

/// Convergence measure: max over cells and components of |R_i| / area_i,
/// the steady-state time derivative, independent of local cell size.
inline double residual_norm(const FvMesh& fv, const Residual& r) {
  double m = 0.0;
  for (std::size_t i = 0; i < fv.num_cells(); ++i)
    m = std::max(m, r.segment<4>(static_cast<Eigen::Index>(4 * i)).cwiseAbs().maxCoeff() / fv.areas[i]);
  return m;
}

namespace detail {
inline void add_block(std::vector<Eigen::Triplet<double>>& trip, int bi, int bj, const Block& b) {
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) trip.emplace_back(4 * bi + r, 4 * bj + c, b(r, c));
}
}  // namespace detail

/// dR/du with 4x4 blocks on the diagonal and at edge neighbors.
inline SparseMatrix assemble_jacobian(const FvMesh& fv, const FlowField& f, const FreeStream& fs) {
  detail::check_sizes(fv, f);
  check_physical(f, fs.gamma);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(fv.faces.size() * 4 * 16);
  for (const auto& face : fv.faces) {
    const State ul = f.cell(static_cast<std::size_t>(face.left));
    FluxJacobian j;
    switch (face.kind) {
      case FaceKind::interior:
        j = numerical_flux_jacobian(ul, f.cell(static_cast<std::size_t>(face.right)), face.normal, fs.gamma);
        break;
      case FaceKind::wall: j = wall_flux_jacobian(ul, face.normal, fs.gamma); break;
      case FaceKind::farfield: j = farfield_flux_jacobian(ul, fs, face.normal); break;
    }
    j.d_left *= face.length;
    detail::add_block(trip, face.left, face.left, j.d_left);
    if (face.right >= 0) {
      j.d_right *= face.length;
      detail::add_block(trip, face.left, face.right, j.d_right);
      detail::add_block(trip, face.right, face.left, -j.d_left);
      detail::add_block(trip, face.right, face.right, -j.d_right);
    }
  }
  const auto n = f.u.size();
  SparseMatrix a(n, n);
  a.setFromTriplets(trip.begin(), trip.end());
  return a;
}

/// Per cell, the sum over its edges of the Rusanov wave speed times edge
/// length. Equals area / local time step at CFL 1.
inline Eigen::VectorXd spectral_radius(const FvMesh& fv, const FlowField& f, const FreeStream& fs) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fv.num_cells()));
  const State inf = freestream_state(fs);
  for (const auto& face : fv.faces) {
    const State ul = f.cell(static_cast<std::size_t>(face.left));
    const State ur = face.kind == FaceKind::interior ? f.cell(static_cast<std::size_t>(face.right))
                     : face.kind == FaceKind::wall   ? mirror_state(ul, face.normal)
                                                     : inf;
    const double lam = std::max(max_wave_speed(ul, face.normal, fs.gamma), max_wave_speed(ur, face.normal, fs.gamma));
    s[face.left] += lam * face.length;
    if (face.right >= 0) s[face.right] += lam * face.length;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Newton with pseudo-transient continuation
// ---------------------------------------------------------------------------

struct NewtonOptions {
  double tol = 1e-3;  // on residual_norm
  int max_iter = 100;
  double cfl_initial = 10.0;
  double cfl_max = 1e15;
  /// Smallest step fraction tried by the line search before the CFL is cut.
  double min_damping = 1.0 / 1024.0;
  double cfl_min = 1e-3;
  /// When false, reaching max_iter returns the current iterate instead of
  /// throwing; `converged` tells the two apart.
  bool throw_on_max_iter = true;
};

struct HistoryRow {
  int iter = 0;
  double residual_norm = 0.0;
  double cfl = 0.0;
};

struct NewtonResult {
  FlowField field;
  std::vector<HistoryRow> history;  // one row per residual evaluation that was accepted
  int iterations = 0;
  double residual_norm = 0.0;
  bool converged = false;
};

/// Solves R(u) = 0. Each step solves (diag(s / cfl) + dR/du) du = -R with s
/// the spectral radius, then backtracks by halving until the state stays
/// physical and the residual 2-norm drops. A full step doubles the CFL, a
/// damped one halves it; when even the smallest step fails the CFL is
/// halved and the step recomputed. Throws SolverError on max_iter or when
/// the CFL falls below cfl_min.
inline NewtonResult newton_solve(const FvMesh& fv, FlowField u, const FreeStream& fs, const NewtonOptions& opts = {}) {
  validate(fs);
  detail::check_sizes(fv, u);
  check_physical(u, fs.gamma);
  NewtonResult out;
  std::vector<double> norms;
  SparseDirectSolver lin;
  double cfl = opts.cfl_initial;
  Residual r = assemble_residual(fv, u, fs);
  double rmax = residual_norm(fv, r);
  double r2 = r.norm();
  for (int it = 0;; ++it) {
    out.history.push_back({it, rmax, cfl});
    norms.push_back(rmax);
    if (rmax <= opts.tol || (it >= opts.max_iter && !opts.throw_on_max_iter)) {
      out.converged = rmax <= opts.tol;
      out.field = std::move(u);
      out.iterations = it;
      out.residual_norm = rmax;
      return out;
    }
    if (it >= opts.max_iter)
      throw SolverError("newton_solve: no convergence in " + std::to_string(opts.max_iter) + " iterations (residual " +
                            format_double(rmax) + ")",
                        norms);
    const SparseMatrix jac = assemble_jacobian(fv, u, fs);
    const Eigen::VectorXd srad = spectral_radius(fv, u, fs);
    for (;;) {
      SparseMatrix a = jac;
      for (Eigen::Index c = 0; c < srad.size(); ++c)
        for (int k = 0; k < 4; ++k) a.coeffRef(4 * c + k, 4 * c + k) += srad[c] / cfl;
      lin.factorize(a);
      const Eigen::VectorXd du = lin.solve(-r);
      double alpha = 1.0;
      bool accepted = false;
      for (; alpha >= opts.min_damping; alpha *= 0.5) {
        FlowField trial{u.u + alpha * du};
        if (!all_physical(trial, fs.gamma)) continue;
        Residual rt = assemble_residual(fv, trial, fs);
        if (!(rt.norm() < r2)) continue;
        u = std::move(trial);
        r = std::move(rt);
        accepted = true;
        break;
      }
      if (accepted) {
        cfl = (alpha == 1.0) ? std::min(cfl * 2.0, opts.cfl_max) : std::max(cfl * 0.5, opts.cfl_min);
        break;
      }
      cfl *= 0.5;
      if (cfl < opts.cfl_min)
        throw SolverError("newton_solve: damping floor reached (residual " + format_double(rmax) + ")", norms);
    }
    rmax = residual_norm(fv, r);
    r2 = r.norm();
  }
}

inline NewtonResult newton_solve(const FvMesh& fv, const FreeStream& fs, const NewtonOptions& opts = {}) {
  return newton_solve(fv, uniform_field(fv.num_cells(), fs), fs, opts);
}

// ---------------------------------------------------------------------------
// Forces
// ---------------------------------------------------------------------------

struct Forces {
  double cd = 0.0;
  double cl = 0.0;
};

/// Pressure force on the airfoil, sum of p n |e| over wall edges with n the
/// cell-outward normal, projected on the free-stream directions and scaled
/// by the dynamic pressure (chord 1).
inline Forces compute_forces(const FvMesh& fv, const FlowField& f, const FreeStream& fs) {
  detail::check_sizes(fv, f);
  Vec2 force;
  for (const auto& face : fv.faces) {
    if (face.kind != FaceKind::wall) continue;
    force += (pressure(f.cell(static_cast<std::size_t>(face.left)), fs.gamma) * face.length) * face.normal;
  }
  const double q = fs.dynamic_pressure();
  return {dot(force, fs.drag_dir()) / q, dot(force, fs.lift_dir()) / q};
}

inline double lift_drag_ratio(const Forces& f) {
  if (std::abs(f.cd) < 1e-12) throw DomainError("lift_drag_ratio: drag coefficient is zero");
  return f.cl / f.cd;
}

}  // namespace shapeopt::euler
