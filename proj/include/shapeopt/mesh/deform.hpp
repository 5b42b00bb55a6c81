/// @file deform.hpp
/// @brief Boundary update, interior displacement propagation, guarded
/// Laplacian smoothing, boundary-layer levels and boundary triangle repair.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "shapeopt/mesh/mesh.hpp"

namespace shapeopt::mesh {

namespace detail {

/// Point at normalized chord-length parameter t on a sample polyline.
inline Vec2 polyline_at(std::span<const Vec2> pts, std::span<const double> s, double t) {
  if (t <= 0.0) return pts.front();
  if (t >= 1.0) return pts.back();
  const auto it = std::upper_bound(s.begin(), s.end(), t);
  const auto i = static_cast<std::size_t>(it - s.begin()) - 1;
  const double w = (t - s[i]) / (s[i + 1] - s[i]);
  return pts[i] + w * (pts[i + 1] - pts[i]);
}

/// Positive-area triangles around each vertex that would become inverted if
/// v moved to p while every other vertex stays put.
inline bool move_inverts(const UnstructuredMesh& m, const std::vector<std::vector<int>>& vt, int v, const Vec2& p) {
  for (int t : vt[static_cast<std::size_t>(v)]) {
    const auto& tri = m.triangles[static_cast<std::size_t>(t)];
    if (!(signed_area(m, tri) > 0.0)) continue;
    Vec2 q[3];
    for (int k = 0; k < 3; ++k) {
      const int w = tri[static_cast<std::size_t>(k)];
      q[k] = (w == v) ? p : m.vertices[static_cast<std::size_t>(w)];
    }
    if (!(orient2d(q[0], q[1], q[2]) > 0.0)) return true;
  }
  return false;
}

/// Smallest angle over the triangles around v, -1 if any is not positive.
inline double star_min_angle(const UnstructuredMesh& m, const std::vector<std::vector<int>>& vt, int v) {
  double lo = 180.0;
  for (int t : vt[static_cast<std::size_t>(v)]) {
    const auto& tri = m.triangles[static_cast<std::size_t>(t)];
    if (!(signed_area(m, tri) > 0.0)) return -1.0;
    const auto ang = triangle_angles(m.vertices[static_cast<std::size_t>(tri[0])], m.vertices[static_cast<std::size_t>(tri[1])],
                                     m.vertices[static_cast<std::size_t>(tri[2])]);
    lo = std::min({lo, ang[0], ang[1], ang[2]});
  }
  return lo;
}

/// True when moving v alone to p would lower its star's smallest angle or
/// invert one of its triangles.
inline bool move_worsens(UnstructuredMesh& m, const std::vector<std::vector<int>>& vt, int v, const Vec2& p) {
  const auto k = static_cast<std::size_t>(v);
  const double before = star_min_angle(m, vt, v);
  const Vec2 keep = m.vertices[k];
  m.vertices[k] = p;
  const double after = star_min_angle(m, vt, v);
  m.vertices[k] = keep;
  return after < 0.0 || after < before;
}

/// Apply proposed moves simultaneously, then roll back any moved vertex whose
/// star lost quality: a triangle that was positive and is not, or a smallest
/// angle below the star's value before the moves. Repeats until stable, so a
/// vertex that stays moved never has a worse star than it started with and
/// the global minimum angle cannot decrease. Returns the number kept.
inline std::size_t apply_guarded(UnstructuredMesh& m, const std::vector<std::vector<int>>& vt,
                                 const std::vector<std::pair<int, Vec2>>& moves) {
  std::vector<char> was_positive(m.triangles.size());
  for (std::size_t t = 0; t < m.triangles.size(); ++t) was_positive[t] = signed_area(m, t) > 0.0;
  std::vector<Vec2> old(moves.size());
  std::vector<double> before(moves.size());
  std::vector<char> active(moves.size(), 1);
  std::vector<int> slot(m.vertices.size(), -1);
  for (std::size_t i = 0; i < moves.size(); ++i) before[i] = star_min_angle(m, vt, moves[i].first);
  for (std::size_t i = 0; i < moves.size(); ++i) {
    const auto v = static_cast<std::size_t>(moves[i].first);
    old[i] = m.vertices[v];
    slot[v] = static_cast<int>(i);
    m.vertices[v] = moves[i].second;
  }
  auto roll_back = [&](int w) {
    const int s = slot[static_cast<std::size_t>(w)];
    if (s < 0 || !active[static_cast<std::size_t>(s)]) return false;
    active[static_cast<std::size_t>(s)] = 0;
    m.vertices[static_cast<std::size_t>(w)] = old[static_cast<std::size_t>(s)];
    return true;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < moves.size(); ++i) {
      if (!active[i]) continue;
      const int v = moves[i].first;
      for (int t : vt[static_cast<std::size_t>(v)]) {
        const auto tt = static_cast<std::size_t>(t);
        if (!was_positive[tt] || signed_area(m, tt) > 0.0) continue;
        for (int w : m.triangles[tt]) changed |= roll_back(w);
      }
      if (active[i] && star_min_angle(m, vt, v) < before[i]) changed |= roll_back(v);
    }
  }
  std::size_t moved = 0;
  for (char a : active) moved += a ? 1 : 0;
  return moved;
}

}  // namespace detail

/// Move airfoil vertices onto the given curves at their stored parameters.
/// Interior and far-field vertices are untouched. Returns the number of
/// inverted triangles afterwards; nonzero means the mesh is tangled.
inline std::size_t update_boundary(UnstructuredMesh& m, const geometry::SurfaceCurves& curves) {
  for (const auto& [v, bp] : m.boundary_map)
    m.vertices[static_cast<std::size_t>(v)] = geometry::bernstein_eval(curves[bp.curve], bp.t);
  m.curves = curves;
  return count_inverted(m);
}

/// Same, with each surface given by its sample polyline; the stored parameter
/// is read as a normalized chord-length position along that polyline.
inline std::size_t update_boundary(UnstructuredMesh& m, const geometry::AirfoilShape& shape) {
  geometry::validate_shape(shape);
  const auto su = geometry::chord_length_parameters(shape.upper);
  const auto sl = geometry::chord_length_parameters(shape.lower);
  for (const auto& [v, bp] : m.boundary_map) {
    const auto& pts = bp.curve == 0 ? shape.upper : shape.lower;
    const auto& s = bp.curve == 0 ? su : sl;
    m.vertices[static_cast<std::size_t>(v)] = detail::polyline_at(pts, s, bp.t);
  }
  return count_inverted(m);
}

/// Harmonic extension of the airfoil displacement into the interior. Solves
/// a P1 Laplace problem on the reference mesh with element stiffness
/// 1 / area^stiffening, so small near-wall cells move almost rigidly. Far-field
/// vertices stay fixed. The factorization depends only on the reference mesh
/// and is reused across calls.
class DisplacementSolver {
 public:
  explicit DisplacementSolver(const UnstructuredMesh& reference, double stiffening = 1.0) : reference_(reference) {
    const std::size_t n = reference.vertices.size();
    index_.assign(n, -1);
    int ni = 0;
    for (std::size_t v = 0; v < n; ++v)
      if (reference.markers[v] == VertexMarker::interior) index_[v] = ni++;
    std::vector<Eigen::Triplet<double>> ii;
    for (const auto& t : reference.triangles) {
      const double area = signed_area(reference, t);
      if (!(area > 0.0)) throw GeometryError("DisplacementSolver: reference mesh has inverted triangles");
      const double k = 1.0 / std::pow(area, stiffening);
      for (int e = 0; e < 3; ++e) {
        const int a = t[static_cast<std::size_t>(e)];
        const int b = t[static_cast<std::size_t>((e + 1) % 3)];
        const int c = t[static_cast<std::size_t>((e + 2) % 3)];
        const Vec2 u = reference.vertices[static_cast<std::size_t>(a)] - reference.vertices[static_cast<std::size_t>(c)];
        const Vec2 w = reference.vertices[static_cast<std::size_t>(b)] - reference.vertices[static_cast<std::size_t>(c)];
        // edge (a,b) weight: half the cotangent of the angle at c
        const double wab = 0.5 * k * dot(u, w) / (2.0 * area);
        const int ia = index_[static_cast<std::size_t>(a)];
        const int ib = index_[static_cast<std::size_t>(b)];
        if (ia >= 0) ii.emplace_back(ia, ia, wab);
        if (ib >= 0) ii.emplace_back(ib, ib, wab);
        if (ia >= 0 && ib >= 0) {
          ii.emplace_back(ia, ib, -wab);
          ii.emplace_back(ib, ia, -wab);
        }
        if (ia >= 0 && ib < 0) coupling_.push_back({ia, b, wab});
        if (ib >= 0 && ia < 0) coupling_.push_back({ib, a, wab});
      }
    }
    Eigen::SparseMatrix<double> A(ni, ni);
    A.setFromTriplets(ii.begin(), ii.end());
    solver_.compute(A);
    if (solver_.info() != Eigen::Success) throw GeometryError("DisplacementSolver: factorization failed");
  }

  /// Interior vertices of `m` are set to reference + extended displacement of
  /// the airfoil vertices of `m`. Boundary vertices are left as they are.
  void apply(UnstructuredMesh& m) const {
    if (m.vertices.size() != reference_.vertices.size()) throw DomainError("DisplacementSolver: topology mismatch");
    const auto ni = static_cast<Eigen::Index>(solver_.rows());
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(ni, 2);
    bool any = false;
    for (const auto& c : coupling_) {
      const auto b = static_cast<std::size_t>(c.boundary);
      const Vec2 d = m.vertices[b] - reference_.vertices[b];
      if (d.x == 0.0 && d.y == 0.0) continue;
      any = true;
      rhs(c.row, 0) += c.weight * d.x;
      rhs(c.row, 1) += c.weight * d.y;
    }
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(ni, 2);
    if (any) u = solver_.solve(rhs);
    for (std::size_t v = 0; v < index_.size(); ++v) {
      const int i = index_[v];
      if (i < 0) continue;
      m.vertices[v] = reference_.vertices[v] + Vec2{u(i, 0), u(i, 1)};
    }
  }

 private:
  struct Coupling {
    int row;
    int boundary;
    double weight;
  };
  UnstructuredMesh reference_;
  std::vector<int> index_;
  std::vector<Coupling> coupling_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

/// One-shot form of DisplacementSolver::apply.
inline void propagate_displacement(UnstructuredMesh& m, const UnstructuredMesh& reference, double stiffening = 1.0) {
  DisplacementSolver(reference, stiffening).apply(m);
}

inline std::function<bool(int)> lock_boundary(const UnstructuredMesh& m) {
  return [&m](int v) { return m.is_boundary(v); };
}

/// Jacobi Laplacian sweeps: every unlocked vertex moves to the mean of its
/// edge neighbors computed from the previous iterate. A move that would turn
/// a positive triangle non-positive or shrink the smallest angle around the
/// vertex is skipped for that sweep, so the mesh minimum angle never drops.
inline void laplacian_smooth(UnstructuredMesh& m, int iterations, const std::function<bool(int)>& locked) {
  const auto nb = vertex_neighbors(m);
  const auto vt = vertex_triangles(m);
  std::vector<std::pair<int, Vec2>> moves;
  for (int it = 0; it < iterations; ++it) {
    moves.clear();
    for (std::size_t v = 0; v < m.vertices.size(); ++v) {
      const int vi = static_cast<int>(v);
      if (locked(vi) || nb[v].empty()) continue;
      Vec2 c;
      for (int w : nb[v]) c += m.vertices[static_cast<std::size_t>(w)];
      c *= 1.0 / static_cast<double>(nb[v].size());
      if (c == m.vertices[v]) continue;
      if (detail::move_inverts(m, vt, vi, c)) continue;
      moves.emplace_back(vi, c);
    }
    if (moves.empty()) break;
    detail::apply_guarded(m, vt, moves);
  }
}

inline void laplacian_smooth(UnstructuredMesh& m, int iterations) {
  laplacian_smooth(m, iterations, lock_boundary(m));
}

struct Levels {
  std::vector<int> level1;  // ascending vertex ids
  std::vector<int> level2;
};

/// level1: non-boundary vertices of triangles touching the airfoil.
/// level2: remaining non-boundary vertices of triangles touching level1.
inline Levels classify_levels(const UnstructuredMesh& m) {
  std::vector<int> lvl(m.vertices.size(), 0);
  for (const auto& t : m.triangles) {
    const bool touches = m.is_airfoil(t[0]) || m.is_airfoil(t[1]) || m.is_airfoil(t[2]);
    if (!touches) continue;
    for (int v : t)
      if (!m.is_boundary(v)) lvl[static_cast<std::size_t>(v)] = 1;
  }
  for (const auto& t : m.triangles) {
    const bool touches = lvl[static_cast<std::size_t>(t[0])] == 1 || lvl[static_cast<std::size_t>(t[1])] == 1 ||
                         lvl[static_cast<std::size_t>(t[2])] == 1;
    if (!touches) continue;
    for (int v : t)
      if (!m.is_boundary(v) && lvl[static_cast<std::size_t>(v)] == 0) lvl[static_cast<std::size_t>(v)] = 2;
  }
  Levels out;
  for (std::size_t v = 0; v < lvl.size(); ++v) {
    if (lvl[v] == 1) out.level1.push_back(static_cast<int>(v));
    if (lvl[v] == 2) out.level2.push_back(static_cast<int>(v));
  }
  return out;
}

/// Lock predicate that frees only the given vertices.
inline std::function<bool(int)> unlock_only(const UnstructuredMesh& m, const std::vector<std::vector<int>>& sets) {
  auto free = std::make_shared<std::vector<char>>(m.vertices.size(), 0);
  for (const auto& s : sets)
    for (int v : s) (*free)[static_cast<std::size_t>(v)] = 1;
  return [free](int v) { return !(*free)[static_cast<std::size_t>(v)]; };
}

struct RepairOptions {
  /// A boundary triangle is rebuilt when inverted, when its smallest angle
  /// drops below min_angle_deg or its largest exceeds max_angle_deg. With
  /// min_angle_deg >= 60 every boundary triangle is rebuilt.
  double min_angle_deg = 20.0;
  double max_angle_deg = 120.0;
  int smoothing_sweeps = 3;
};

/// Move the third vertex of each badly shaped triangle with exactly two
/// airfoil vertices to the apex of the equilateral triangle on the interior
/// side of its boundary edge (targets are averaged when a vertex is apex to
/// several edges), then smooth the level-2 vertices around the moved apexes
/// with level 1 held. A move that would invert a triangle or lower the
/// smallest angle around the apex is halved until it does not, up to 30
/// times, and dropped otherwise. Returns the number of apexes moved.
inline std::size_t repair_boundary_triangles(UnstructuredMesh& m, const RepairOptions& opts = {}) {
  std::vector<Vec2> target(m.vertices.size());
  std::vector<int> count(m.vertices.size(), 0);
  for (const auto& t : m.triangles) {
    for (int k = 0; k < 3; ++k) {
      const int a = t[static_cast<std::size_t>(k)];
      const int b = t[static_cast<std::size_t>((k + 1) % 3)];
      const int c = t[static_cast<std::size_t>((k + 2) % 3)];
      if (!m.is_airfoil(a) || !m.is_airfoil(b) || m.is_boundary(c)) continue;
      const Vec2 pa = m.vertices[static_cast<std::size_t>(a)];
      const Vec2 pb = m.vertices[static_cast<std::size_t>(b)];
      const Vec2 pc = m.vertices[static_cast<std::size_t>(c)];
      const auto ang = triangle_angles(pa, pb, pc);
      const double lo = std::min({ang[0], ang[1], ang[2]});
      const double hi = std::max({ang[0], ang[1], ang[2]});
      if (orient2d(pa, pb, pc) > 0.0 && lo >= opts.min_angle_deg && hi <= opts.max_angle_deg) continue;
      const Vec2 e = pb - pa;
      // c lies left of a->b in a counterclockwise triangle
      const Vec2 left{-e.y, e.x};
      target[static_cast<std::size_t>(c)] += 0.5 * (pa + pb) + (std::sqrt(3.0) / 2.0) * left;
      ++count[static_cast<std::size_t>(c)];
    }
  }
  const auto vt = vertex_triangles(m);
  std::vector<std::pair<int, Vec2>> moves;
  for (std::size_t v = 0; v < m.vertices.size(); ++v) {
    if (count[v] == 0) continue;
    const Vec2 goal = target[v] * (1.0 / static_cast<double>(count[v]));
    const Vec2 from = m.vertices[v];
    double s = 1.0;
    for (int h = 0; h < 30 && detail::move_worsens(m, vt, static_cast<int>(v), from + s * (goal - from)); ++h) s *= 0.5;
    const Vec2 p = from + s * (goal - from);
    if (!detail::move_worsens(m, vt, static_cast<int>(v), p)) moves.emplace_back(static_cast<int>(v), p);
  }
  if (moves.empty()) return 0;
  const std::size_t moved = detail::apply_guarded(m, vt, moves);
  if (opts.smoothing_sweeps > 0) {
    // level-2 vertices sharing a triangle with a moved apex
    const auto lv = classify_levels(m);
    std::vector<char> is_l2(m.vertices.size(), 0);
    for (int v : lv.level2) is_l2[static_cast<std::size_t>(v)] = 1;
    std::vector<int> around;
    for (const auto& [v, p] : moves)
      for (int t : vt[static_cast<std::size_t>(v)])
        for (int w : m.triangles[static_cast<std::size_t>(t)])
          if (is_l2[static_cast<std::size_t>(w)]) around.push_back(w);
    laplacian_smooth(m, opts.smoothing_sweeps, unlock_only(m, {around}));
  }
  return moved;
}

struct DeformOptions {
  double stiffening = 1.0;
  int smoothing_sweeps = 3;
  RepairOptions repair;
};

/// Mesh update after a shape change on a fixed topology: start from the
/// reference mesh, move the airfoil onto the new curves, extend the
/// displacement into the interior, smooth level 1 and level 2, then rebuild
/// badly shaped boundary triangles. Always restarts from the reference, so
/// the result depends only on the curves and not on the path taken.
class MeshDeformer {
 public:
  explicit MeshDeformer(UnstructuredMesh reference, DeformOptions opts = {})
      : reference_(std::move(reference)), opts_(opts), solver_(reference_, opts.stiffening) {}

  const UnstructuredMesh& reference() const noexcept { return reference_; }

  /// Returns the number of inverted triangles in the result.
  std::size_t deform(UnstructuredMesh& m, const geometry::SurfaceCurves& curves) const {
    m = reference_;
    update_boundary(m, curves);
    solver_.apply(m);
    if (opts_.smoothing_sweeps > 0) {
      const auto lv = classify_levels(m);
      laplacian_smooth(m, opts_.smoothing_sweeps, unlock_only(m, {lv.level1, lv.level2}));
    }
    repair_boundary_triangles(m, opts_.repair);
    return count_inverted(m);
  }

 private:
  UnstructuredMesh reference_;
  DeformOptions opts_;
  DisplacementSolver solver_;
};

inline std::size_t deform_mesh(UnstructuredMesh& m, const UnstructuredMesh& reference,
                               const geometry::SurfaceCurves& curves, const DeformOptions& opts = {}) {
  return MeshDeformer(reference, opts).deform(m, curves);
}

}  // namespace shapeopt::mesh
