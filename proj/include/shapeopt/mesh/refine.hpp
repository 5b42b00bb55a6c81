/// @file refine.hpp
/// @brief Uniform (embedded) refinement, red-green adaptive refinement and
/// curvature-based marking of boundary triangles.
#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>
#include <vector>

#include "shapeopt/mesh/mesh.hpp"

namespace shapeopt::mesh {

struct RefinementHierarchy {
  UnstructuredMesh coarse;
  UnstructuredMesh fine;
  std::vector<int> parent_map;  // fine triangle -> coarse triangle
};

/// Refined mesh plus the coarse triangle each new triangle came from.
struct RefineResult {
  UnstructuredMesh mesh;
  std::vector<int> parent_map;
};

namespace detail {

/// Curve id and parameter of the midpoint of an airfoil edge. The shared
/// LE/TE vertices sit at t = 0 / 1 on both curves, so the curve is taken
/// from the vertex that is not one of them.
inline BoundaryParam boundary_midpoint_param(const BoundaryParam& a, const BoundaryParam& b) {
  const bool a_end = a.t == 0.0 || a.t == 1.0;
  const bool b_end = b.t == 0.0 || b.t == 1.0;
  int curve = a.curve;
  if (a_end && !b_end) curve = b.curve;
  return {curve, 0.5 * (a.t + b.t)};
}

class MidpointBuilder {
 public:
  explicit MidpointBuilder(UnstructuredMesh& out) : out_(out) {
    const auto adj = build_adjacency(out);
    for (std::size_t t = 0; t < out.triangles.size(); ++t)
      for (int k = 0; k < 3; ++k)
        if (adj.neighbor[t][static_cast<std::size_t>(k)] < 0)
          boundary_edges_.insert(edge_key(out.triangles[t][static_cast<std::size_t>(k)],
                                          out.triangles[t][static_cast<std::size_t>((k + 1) % 3)]));
  }

  /// Vertex id of the midpoint of edge (a, b), created on first request.
  int get(int a, int b) {
    const auto key = edge_key(a, b);
    if (auto it = mid_.find(key); it != mid_.end()) return it->second;
    const bool on_boundary = boundary_edges_.contains(key);
    const Vec2 pa = out_.vertices[static_cast<std::size_t>(a)];
    const Vec2 pb = out_.vertices[static_cast<std::size_t>(b)];
    Vec2 p = 0.5 * (pa + pb);
    VertexMarker mk = VertexMarker::interior;
    const int id = static_cast<int>(out_.vertices.size());
    if (on_boundary && out_.is_airfoil(a) && out_.is_airfoil(b)) {
      mk = VertexMarker::airfoil;
      const auto bp = boundary_midpoint_param(out_.boundary_map.at(a), out_.boundary_map.at(b));
      if (out_.curves) p = geometry::bernstein_eval((*out_.curves)[bp.curve], bp.t);
      out_.boundary_map.emplace(id, bp);
    } else if (on_boundary && out_.markers[static_cast<std::size_t>(a)] == VertexMarker::farfield &&
               out_.markers[static_cast<std::size_t>(b)] == VertexMarker::farfield) {
      mk = VertexMarker::farfield;
      if (out_.farfield_radius > 0.0) p = p * (out_.farfield_radius / norm(p));
    }
    out_.vertices.push_back(p);
    out_.markers.push_back(mk);
    mid_.emplace(key, id);
    return id;
  }

 private:
  UnstructuredMesh& out_;
  std::set<std::uint64_t> boundary_edges_;
  std::unordered_map<std::uint64_t, int> mid_;
};

inline void push_red(std::vector<Triangle>& tris, const Triangle& t, int mab, int mbc, int mca) {
  tris.push_back({t[0], mab, mca});
  tris.push_back({mab, t[1], mbc});
  tris.push_back({mca, mbc, t[2]});
  tris.push_back({mab, mbc, mca});
}

}  // namespace detail

/// Split every triangle into four by its edge midpoints. Children of coarse
/// triangle p are fine triangles 4p..4p+3; coarse vertices keep their ids and
/// midpoints follow. Airfoil midpoints are placed on the mesh curves when the
/// mesh carries them, far-field midpoints on the far-field circle.
inline RefinementHierarchy uniform_refine(const UnstructuredMesh& coarse) {
  RefinementHierarchy h;
  h.coarse = coarse;
  h.fine = coarse;
  detail::MidpointBuilder mids(h.fine);  // reads boundary edges before the triangles go
  h.fine.triangles.clear();
  h.fine.triangles.reserve(4 * coarse.triangles.size());
  h.parent_map.reserve(4 * coarse.triangles.size());
  for (std::size_t p = 0; p < coarse.triangles.size(); ++p) {
    const auto& t = coarse.triangles[p];
    const int mab = mids.get(t[0], t[1]);
    const int mbc = mids.get(t[1], t[2]);
    const int mca = mids.get(t[2], t[0]);
    detail::push_red(h.fine.triangles, t, mab, mbc, mca);
    for (int c = 0; c < 4; ++c) h.parent_map.push_back(static_cast<int>(p));
  }
  return h;
}

/// Red-green refinement. Marked triangles are split into four; a triangle
/// with two or more split edges is promoted to a red split as well, and a
/// triangle with a single split edge is bisected from that edge's midpoint
/// to the opposite vertex, so the result has no hanging nodes. With every
/// triangle marked the output equals uniform_refine's fine mesh.
inline RefineResult refine_marked_map(const UnstructuredMesh& m, const std::vector<int>& marked) {
  const std::size_t nt = m.triangles.size();
  std::vector<char> red(nt, 0);
  for (int t : marked) {
    if (t < 0 || static_cast<std::size_t>(t) >= nt) throw DomainError("refine_marked: triangle index out of range");
    red[static_cast<std::size_t>(t)] = 1;
  }
  RefineResult r;
  r.mesh = m;
  if (marked.empty()) {
    r.parent_map.resize(nt);
    for (std::size_t t = 0; t < nt; ++t) r.parent_map[t] = static_cast<int>(t);
    return r;
  }

  std::set<std::uint64_t> split;
  auto count_split = [&](const Triangle& t) {
    int c = 0;
    for (int k = 0; k < 3; ++k)
      c += split.contains(edge_key(t[static_cast<std::size_t>(k)], t[static_cast<std::size_t>((k + 1) % 3)])) ? 1 : 0;
    return c;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t t = 0; t < nt; ++t) {
      const auto& tri = m.triangles[t];
      if (!red[t] && count_split(tri) >= 2) {
        red[t] = 1;
        changed = true;
      }
      if (red[t])
        for (int k = 0; k < 3; ++k)
          changed |= split.insert(edge_key(tri[static_cast<std::size_t>(k)], tri[static_cast<std::size_t>((k + 1) % 3)])).second;
    }
  }

  detail::MidpointBuilder mids(r.mesh);
  r.mesh.triangles.clear();
  for (std::size_t p = 0; p < nt; ++p) {
    const auto& t = m.triangles[p];
    const auto before = r.mesh.triangles.size();
    if (red[p]) {
      const int mab = mids.get(t[0], t[1]);
      const int mbc = mids.get(t[1], t[2]);
      const int mca = mids.get(t[2], t[0]);
      detail::push_red(r.mesh.triangles, t, mab, mbc, mca);
    } else if (count_split(t) == 1) {
      for (int k = 0; k < 3; ++k) {
        const int a = t[static_cast<std::size_t>(k)];
        const int b = t[static_cast<std::size_t>((k + 1) % 3)];
        const int c = t[static_cast<std::size_t>((k + 2) % 3)];
        if (!split.contains(edge_key(a, b))) continue;
        const int mid = mids.get(a, b);
        r.mesh.triangles.push_back({a, mid, c});
        r.mesh.triangles.push_back({mid, b, c});
      }
    } else {
      r.mesh.triangles.push_back(t);
    }
    for (auto i = before; i < r.mesh.triangles.size(); ++i) r.parent_map.push_back(static_cast<int>(p));
  }
  return r;
}

inline UnstructuredMesh refine_marked(const UnstructuredMesh& m, const std::vector<int>& marked) {
  return refine_marked_map(m, marked).mesh;
}

/// Total turning of curve `c` between parameters t1 and t2, sampled at
/// `samples` points. Equals the sum of discrete curvature times segment length.
inline double curve_turning(const geometry::BezierCurve& c, double t1, double t2, int samples = 32) {
  if (samples < 3) throw DomainError("curve_turning: need >= 3 samples");
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    const double t = t1 + (t2 - t1) * static_cast<double>(i) / static_cast<double>(samples - 1);
    const Vec2 p = geometry::bernstein_eval(c, std::clamp(t, 0.0, 1.0));
    if (!pts.empty() && p == pts.back()) continue;
    pts.push_back(p);
  }
  if (pts.size() < 3) return 0.0;
  return geometry::discrete_curvature(pts).total_turning;
}

/// Triangles adjacent to airfoil boundary edges whose curve segment turns by
/// more than kappa_tol radians. Ascending, without duplicates.
inline std::vector<int> curvature_capture(const UnstructuredMesh& m, const geometry::SurfaceCurves& curves,
                                          double kappa_tol, int samples = 32) {
  const auto adj = build_adjacency(m);
  std::vector<int> marked;
  for (std::size_t t = 0; t < m.triangles.size(); ++t)
    for (int k = 0; k < 3; ++k) {
      if (adj.neighbor[t][static_cast<std::size_t>(k)] >= 0) continue;
      const int a = m.triangles[t][static_cast<std::size_t>(k)];
      const int b = m.triangles[t][static_cast<std::size_t>((k + 1) % 3)];
      if (!m.is_airfoil(a) || !m.is_airfoil(b)) continue;
      const auto& pa = m.boundary_map.at(a);
      const auto& pb = m.boundary_map.at(b);
      const int curve = detail::boundary_midpoint_param(pa, pb).curve;
      if (curve_turning(curves[curve], pa.t, pb.t, samples) > kappa_tol) {
        marked.push_back(static_cast<int>(t));
        break;
      }
    }
  return marked;
}

}  // namespace shapeopt::mesh
