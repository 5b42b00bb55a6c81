/// @file mesh.hpp
/// @brief Unstructured triangular mesh with airfoil boundary map, topology
/// queries, quality metrics and the text mesh file.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "shapeopt/core.hpp"
#include "shapeopt/geometry/shape.hpp"

namespace shapeopt::mesh {

enum class VertexMarker : int { interior = 0, airfoil = 1, farfield = 2 };

using Triangle = std::array<int, 3>;

/// Curve id (0 upper, 1 lower) and Bezier parameter of an airfoil vertex.
/// The shared leading/trailing edge vertices carry curve 0 with t = 0 / 1,
/// which is the same point on both curves.
struct BoundaryParam {
  int curve = 0;
  double t = 0.0;
  friend bool operator==(const BoundaryParam&, const BoundaryParam&) = default;
};

struct UnstructuredMesh {
  std::vector<Vec2> vertices;
  std::vector<Triangle> triangles;  // counterclockwise
  std::vector<VertexMarker> markers;
  std::map<int, BoundaryParam> boundary_map;

  /// Curves the airfoil vertices live on; used to place new boundary
  /// vertices during refinement. Absent means straight-edge midpoints.
  std::optional<geometry::SurfaceCurves> curves;
  /// Far-field circle radius about the origin; 0 disables projection.
  double farfield_radius = 0.0;

  std::size_t num_vertices() const noexcept { return vertices.size(); }
  std::size_t num_triangles() const noexcept { return triangles.size(); }
  bool is_airfoil(int v) const { return markers[static_cast<std::size_t>(v)] == VertexMarker::airfoil; }
  bool is_boundary(int v) const { return markers[static_cast<std::size_t>(v)] != VertexMarker::interior; }
};

inline double signed_area(const UnstructuredMesh& m, const Triangle& t) {
  return 0.5 * orient2d(m.vertices[static_cast<std::size_t>(t[0])], m.vertices[static_cast<std::size_t>(t[1])],
                        m.vertices[static_cast<std::size_t>(t[2])]);
}

inline double signed_area(const UnstructuredMesh& m, std::size_t tri) { return signed_area(m, m.triangles[tri]); }

inline std::size_t count_inverted(const UnstructuredMesh& m) {
  std::size_t n = 0;
  for (const auto& t : m.triangles)
    if (!(signed_area(m, t) > 0.0)) ++n;
  return n;
}

inline double total_area(const UnstructuredMesh& m) {
  double a = 0.0;
  for (const auto& t : m.triangles) a += signed_area(m, t);
  return a;
}

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------

inline std::uint64_t edge_key(int a, int b) noexcept {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

/// Triangle adjacency: neighbor[t][k] is the triangle across the edge
/// (v[k], v[k+1 mod 3]) of t, or -1 on the boundary.
struct Adjacency {
  std::vector<std::array<int, 3>> neighbor;
  std::size_t nonmanifold_edges = 0;  // edges shared by more than two triangles
};

inline Adjacency build_adjacency(const UnstructuredMesh& m) {
  Adjacency adj;
  adj.neighbor.assign(m.triangles.size(), {-1, -1, -1});
  std::unordered_map<std::uint64_t, std::pair<int, int>> open;  // edge -> (tri, local edge)
  open.reserve(m.triangles.size() * 2);
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    for (int k = 0; k < 3; ++k) {
      const auto& tri = m.triangles[t];
      const auto key = edge_key(tri[static_cast<std::size_t>(k)], tri[static_cast<std::size_t>((k + 1) % 3)]);
      auto it = open.find(key);
      if (it == open.end()) {
        open.emplace(key, std::pair{static_cast<int>(t), k});
      } else if (it->second.first >= 0) {
        const auto [ot, ok] = it->second;
        adj.neighbor[t][static_cast<std::size_t>(k)] = ot;
        adj.neighbor[static_cast<std::size_t>(ot)][static_cast<std::size_t>(ok)] = static_cast<int>(t);
        it->second.first = -1;  // closed; a third use is non-manifold
      } else {
        ++adj.nonmanifold_edges;
      }
    }
  }
  return adj;
}

/// Edge-neighbor lists per vertex, sorted ascending.
inline std::vector<std::vector<int>> vertex_neighbors(const UnstructuredMesh& m) {
  std::vector<std::vector<int>> nb(m.vertices.size());
  for (const auto& t : m.triangles)
    for (int k = 0; k < 3; ++k) {
      const int a = t[static_cast<std::size_t>(k)];
      const int b = t[static_cast<std::size_t>((k + 1) % 3)];
      nb[static_cast<std::size_t>(a)].push_back(b);
      nb[static_cast<std::size_t>(b)].push_back(a);
    }
  for (auto& l : nb) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
  return nb;
}

/// Triangles incident to each vertex.
inline std::vector<std::vector<int>> vertex_triangles(const UnstructuredMesh& m) {
  std::vector<std::vector<int>> vt(m.vertices.size());
  for (std::size_t t = 0; t < m.triangles.size(); ++t)
    for (int v : m.triangles[t]) vt[static_cast<std::size_t>(v)].push_back(static_cast<int>(t));
  return vt;
}

struct InvariantReport {
  std::size_t inverted = 0;
  std::size_t nonmanifold_edges = 0;
  std::size_t boundary_edges_with_interior_vertex = 0;
  bool boundary_map_consistent = true;

  bool ok() const noexcept {
    return inverted == 0 && nonmanifold_edges == 0 && boundary_edges_with_interior_vertex == 0 &&
           boundary_map_consistent;
  }
};

/// Positive areas, edge-manifold topology, boundary edges only between
/// boundary-tagged vertices, boundary_map covering exactly the airfoil vertices.
inline InvariantReport check_invariants(const UnstructuredMesh& m) {
  InvariantReport r;
  r.inverted = count_inverted(m);
  const auto adj = build_adjacency(m);
  r.nonmanifold_edges = adj.nonmanifold_edges;
  for (std::size_t t = 0; t < m.triangles.size(); ++t)
    for (int k = 0; k < 3; ++k)
      if (adj.neighbor[t][static_cast<std::size_t>(k)] < 0) {
        const int a = m.triangles[t][static_cast<std::size_t>(k)];
        const int b = m.triangles[t][static_cast<std::size_t>((k + 1) % 3)];
        if (!m.is_boundary(a) || !m.is_boundary(b)) ++r.boundary_edges_with_interior_vertex;
      }
  std::size_t airfoil = 0;
  for (std::size_t v = 0; v < m.vertices.size(); ++v)
    if (m.markers[v] == VertexMarker::airfoil) {
      ++airfoil;
      if (!m.boundary_map.contains(static_cast<int>(v))) r.boundary_map_consistent = false;
    }
  if (airfoil != m.boundary_map.size()) r.boundary_map_consistent = false;
  return r;
}

// ---------------------------------------------------------------------------
// Quality
// ---------------------------------------------------------------------------

struct QualityMetrics {
  double min_angle_deg = 180.0;
  double max_angle_deg = 0.0;
  double min_area = 0.0;
};

/// Interior angles of a triangle in degrees, at vertex 0, 1, 2.
inline std::array<double, 3> triangle_angles(const Vec2& a, const Vec2& b, const Vec2& c) {
  auto angle = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    const Vec2 u = q - p;
    const Vec2 v = r - p;
    return std::atan2(std::abs(cross(u, v)), dot(u, v)) * 180.0 / kPi;
  };
  return {angle(a, b, c), angle(b, c, a), angle(c, a, b)};
}

inline QualityMetrics quality_metrics(const UnstructuredMesh& m) {
  QualityMetrics q;
  q.min_area = std::numeric_limits<double>::infinity();
  for (const auto& t : m.triangles) {
    const auto ang = triangle_angles(m.vertices[static_cast<std::size_t>(t[0])], m.vertices[static_cast<std::size_t>(t[1])],
                                     m.vertices[static_cast<std::size_t>(t[2])]);
    for (double a : ang) {
      q.min_angle_deg = std::min(q.min_angle_deg, a);
      q.max_angle_deg = std::max(q.max_angle_deg, a);
    }
    q.min_area = std::min(q.min_area, signed_area(m, t));
  }
  return q;
}

// ---------------------------------------------------------------------------
// Mesh file
//   VERTICES n        x y marker
//   TRIANGLES m       i j k
//   BOUNDARY_MAP b    vertex curve t
// Values use the shortest round-trip decimal form so save/load is bit-exact.
// ---------------------------------------------------------------------------

inline void write_mesh(std::ostream& os, const UnstructuredMesh& m) {
  os << "VERTICES " << m.vertices.size() << '\n';
  for (std::size_t i = 0; i < m.vertices.size(); ++i)
    os << format_double(m.vertices[i].x) << ' ' << format_double(m.vertices[i].y) << ' '
       << static_cast<int>(m.markers[i]) << '\n';
  os << "TRIANGLES " << m.triangles.size() << '\n';
  for (const auto& t : m.triangles) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  os << "BOUNDARY_MAP " << m.boundary_map.size() << '\n';
  for (const auto& [v, bp] : m.boundary_map) os << v << ' ' << bp.curve << ' ' << format_double(bp.t) << '\n';
}

inline UnstructuredMesh read_mesh(std::istream& is) {
  UnstructuredMesh m;
  std::string tag;
  std::size_t n = 0;
  if (!(is >> tag >> n) || tag != "VERTICES") throw IoError("mesh file: expected VERTICES");
  m.vertices.resize(n);
  m.markers.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string xs;
    std::string ys;
    int mk = 0;
    if (!(is >> xs >> ys >> mk)) throw IoError("mesh file: truncated vertex list");
    if (mk < 0 || mk > 2) throw IoError("mesh file: bad vertex marker");
    m.vertices[i] = {parse_double(xs), parse_double(ys)};
    m.markers[i] = static_cast<VertexMarker>(mk);
  }
  if (!(is >> tag >> n) || tag != "TRIANGLES") throw IoError("mesh file: expected TRIANGLES");
  m.triangles.resize(n);
  for (auto& t : m.triangles) {
    if (!(is >> t[0] >> t[1] >> t[2])) throw IoError("mesh file: truncated triangle list");
    for (int v : t)
      if (v < 0 || static_cast<std::size_t>(v) >= m.vertices.size()) throw IoError("mesh file: vertex index out of range");
  }
  if (!(is >> tag >> n) || tag != "BOUNDARY_MAP") throw IoError("mesh file: expected BOUNDARY_MAP");
  for (std::size_t i = 0; i < n; ++i) {
    int v = 0;
    BoundaryParam bp;
    std::string ts;
    if (!(is >> v >> bp.curve >> ts)) throw IoError("mesh file: truncated boundary map");
    bp.t = parse_double(ts);
    m.boundary_map.emplace(v, bp);
  }
  // far-field radius is not stored; recover it when the far field is a circle
  double rmin = std::numeric_limits<double>::infinity();
  double rmax = 0.0;
  for (std::size_t i = 0; i < m.vertices.size(); ++i)
    if (m.markers[i] == VertexMarker::farfield) {
      rmin = std::min(rmin, norm(m.vertices[i]));
      rmax = std::max(rmax, norm(m.vertices[i]));
    }
  if (rmax > 0.0 && rmax - rmin <= 1e-9 * rmax) m.farfield_radius = rmax;
  return m;
}

inline void save_mesh(const std::string& path, const UnstructuredMesh& m) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  write_mesh(os, m);
}

inline UnstructuredMesh load_mesh(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  return read_mesh(is);
}

}  // namespace shapeopt::mesh
