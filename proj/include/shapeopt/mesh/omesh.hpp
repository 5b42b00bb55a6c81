/// @file omesh.hpp
/// @brief Layered O-mesh generator between an airfoil contour and a circular
/// far field.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "shapeopt/mesh/mesh.hpp"

namespace shapeopt::mesh {

struct OMeshOptions {
  /// First-layer height as a fraction of the local wall spacing.
  double first_layer_ratio = 0.87;
  /// Wall distance over which rays turn from the wall normal onto the
  /// straight line to their far-field point.
  double blend_distance = 2.0;
  int normal_passes = 64;
  /// Wall spacing of the common radial distribution all rays blend into
  /// away from the wall; evens out neighbouring rays that start with very
  /// different first layers (leading and trailing edge clustering).
  double common_first_layer = 0.02;
  /// Blend weight toward the common distribution is (k / n_layers)^power;
  /// 0 disables the blend.
  double common_blend_power = 2.0;
};

namespace detail {

/// Closed airfoil loop, counterclockwise: TE, upper surface TE->LE, LE,
/// lower surface LE->TE (TE not repeated). Returns points and boundary params.
inline std::pair<std::vector<Vec2>, std::vector<BoundaryParam>> airfoil_loop(const geometry::AirfoilShape& s) {
  const auto tu = geometry::chord_length_parameters(s.upper);
  const auto tl = geometry::chord_length_parameters(s.lower);
  std::vector<Vec2> pts;
  std::vector<BoundaryParam> par;
  for (std::size_t i = s.upper.size(); i-- > 0;) {
    pts.push_back(s.upper[i]);
    par.push_back({0, tu[i]});
  }
  for (std::size_t i = 1; i + 1 < s.lower.size(); ++i) {
    pts.push_back(s.lower[i]);
    par.push_back({1, tl[i]});
  }
  return {pts, par};
}

inline bool segments_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double d1 = orient2d(c, d, a);
  const double d2 = orient2d(c, d, b);
  const double d3 = orient2d(a, b, c);
  const double d4 = orient2d(a, b, d);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

inline bool simple_polygon(const std::vector<Vec2>& p) {
  const std::size_t n = p.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      if (segments_cross(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n])) return false;
    }
  double area = 0.0;
  for (std::size_t i = 0; i < n; ++i) area += cross(p[i], p[(i + 1) % n]);
  return area > 0.0;
}

inline std::vector<Vec2> smoothed_normals(const std::vector<Vec2>& ring, int passes) {
  const std::size_t n = ring.size();
  std::vector<Vec2> nrm(n);
  for (std::size_t j = 0; j < n; ++j) {
    const Vec2 t = ring[(j + 1) % n] - ring[(j + n - 1) % n];
    const double l = norm(t);
    nrm[j] = {t.y / l, -t.x / l};
  }
  std::vector<Vec2> tmp(n);
  for (int p = 0; p < passes; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      const Vec2 v = 0.25 * nrm[(j + n - 1) % n] + 0.5 * nrm[j] + 0.25 * nrm[(j + 1) % n];
      tmp[j] = v * (1.0 / norm(v));
    }
    nrm.swap(tmp);
  }
  return nrm;
}

/// Growth ratio r with h0 (r^n - 1) / (r - 1) = total.
inline double growth_ratio(double h0, int n, double total) {
  if (h0 * n >= total) return 1.0;
  double lo = 1.0 + 1e-12;
  double hi = 4.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double sum = h0 * (std::pow(mid, n) - 1.0) / (mid - 1.0);
    (sum < total ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Triangulated O-grid. Airfoil vertices sit exactly at the shape samples
/// (shared LE/TE stations once). Ray j runs from airfoil vertex j to a
/// uniformly spaced point on the far-field circle about the origin, with
/// geometric grading from a first layer proportional to the local wall
/// spacing. Each quad is split along its shorter diagonal.
namespace detail {

inline UnstructuredMesh build_omesh(const geometry::AirfoilShape& shape, double radius, int n_layers,
                                    const OMeshOptions& opts) {
  geometry::validate_shape(shape);
  if (n_layers < 3) throw DomainError("generate_omesh: n_layers must be >= 3");
  if (!geometry::surfaces_ordered(shape)) throw GeometryError("generate_omesh: surfaces intersect");
  auto [loop, params] = airfoil_loop(shape);
  if (!simple_polygon(loop)) throw GeometryError("generate_omesh: airfoil contour self-intersects");
  double extent = 0.0;
  for (const auto& p : loop) extent = std::max(extent, norm(p));
  if (!(radius > 4.0 * extent)) throw DomainError("generate_omesh: radius must be much larger than the chord");

  const std::size_t N = loop.size();
  const auto nl = static_cast<std::size_t>(n_layers);
  const auto nrm = smoothed_normals(loop, opts.normal_passes);

  std::vector<std::vector<Vec2>> rings(nl + 1, std::vector<Vec2>(N));
  rings[0] = loop;
  for (std::size_t j = 0; j < N; ++j) {
    // Far end of ray j: uniform angles, starting on the +x axis at the TE.
    const double ang = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(N);
    const Vec2 far{radius * std::cos(ang), radius * std::sin(ang)};
    const Vec2 p = loop[j];
    const double len = distance(p, far);
    const Vec2 u = (far - p) * (1.0 / len);
    const double ds = 0.5 * (distance(loop[(j + N - 1) % N], p) + distance(p, loop[(j + 1) % N]));
    const double h0 = opts.first_layer_ratio * ds;
    const double r = growth_ratio(h0, n_layers, len);
    const double hc = opts.common_first_layer;
    const double rc = growth_ratio(hc, n_layers, len);
    auto graded = [&](double h, double q, std::size_t k) {
      return (q == 1.0) ? len * static_cast<double>(k) / static_cast<double>(nl)
                        : h * (std::pow(q, static_cast<double>(k)) - 1.0) / (q - 1.0);
    };
    for (std::size_t k = 1; k < nl; ++k) {
      const double own = graded(h0, r, k);
      double d = own;
      if (opts.common_blend_power > 0.0) {
        const double w = std::pow(static_cast<double>(k) / static_cast<double>(nl), opts.common_blend_power);
        d = std::exp((1.0 - w) * std::log(own) + w * std::log(graded(hc, rc, k)));
      }
      // leaves the wall along the normal, bends onto the straight ray
      const double x = std::min(d / opts.blend_distance, 1.0);
      const double phi = x * x * (3.0 - 2.0 * x);
      rings[k][j] = p + d * ((1.0 - phi) * nrm[j] + phi * u);
    }
    rings[nl][j] = far;
  }

  UnstructuredMesh m;
  m.farfield_radius = radius;
  m.vertices.reserve((nl + 1) * N);
  for (std::size_t k = 0; k <= nl; ++k)
    for (std::size_t j = 0; j < N; ++j) {
      m.vertices.push_back(rings[k][j]);
      m.markers.push_back(k == 0 ? VertexMarker::airfoil : (k == nl ? VertexMarker::farfield : VertexMarker::interior));
    }
  for (std::size_t j = 0; j < N; ++j) m.boundary_map.emplace(static_cast<int>(j), params[j]);

  auto id = [N](std::size_t k, std::size_t j) { return static_cast<int>(k * N + (j % N)); };
  m.triangles.reserve(2 * nl * N);
  for (std::size_t k = 0; k < nl; ++k)
    for (std::size_t j = 0; j < N; ++j) {
      const int a = id(k, j);
      const int b = id(k, j + 1);
      const int c = id(k + 1, j + 1);
      const int d = id(k + 1, j);
      // a -> d -> c -> b runs counterclockwise since the loop is counterclockwise
      const auto& V = m.vertices;
      if (distance(V[static_cast<std::size_t>(a)], V[static_cast<std::size_t>(c)]) <=
          distance(V[static_cast<std::size_t>(b)], V[static_cast<std::size_t>(d)])) {
        m.triangles.push_back({a, d, c});
        m.triangles.push_back({a, c, b});
      } else {
        m.triangles.push_back({a, d, b});
        m.triangles.push_back({b, d, c});
      }
    }

  return m;
}

}  // namespace detail

inline UnstructuredMesh generate_omesh(const geometry::AirfoilShape& shape, double radius, int n_layers,
                                       const OMeshOptions& opts = {}) {
  auto m = detail::build_omesh(shape, radius, n_layers, opts);
  const auto inv = check_invariants(m);
  if (!inv.ok())
    throw GeometryError("generate_omesh: generated mesh violates invariants (" + std::to_string(inv.inverted) +
                        " inverted, " + std::to_string(inv.nonmanifold_edges) + " non-manifold edges)");
  return m;
}

}  // namespace shapeopt::mesh
