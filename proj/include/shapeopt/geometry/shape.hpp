/// @file shape.hpp
/// @brief Airfoil sample-point geometry: NACA initialization, Gaussian-bump
/// deformation, thickness constraint, discrete curvature and the shape file.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "shapeopt/core.hpp"
#include "shapeopt/geometry/bezier.hpp"

namespace shapeopt::geometry {

/// Upper and lower surfaces, each ordered leading edge -> trailing edge with
/// strictly increasing x. Both surfaces include the shared LE and TE points.
struct AirfoilShape {
  std::vector<Vec2> upper;
  std::vector<Vec2> lower;

  std::size_t sample_count() const noexcept { return upper.size() + lower.size(); }
};

struct DeformAction {
  double x_target = 0.5;
  double y_upper_change = 0.0;
  double y_lower_change = 0.0;
  double delta = 0.4;  // Gaussian width

  DeformAction opposite() const noexcept {
    return {x_target, -y_upper_change, -y_lower_change, delta};
  }
};

struct ActionBounds {
  double max_step = 0.005;
  double delta_min = 0.2;
  double delta_max = 0.8;
};

struct ThicknessRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// Minimum-thickness requirement on chord intervals. With a reference
/// thickness distribution the requirement at x becomes
/// min(min_thickness, reference(x)), so a shape that is thinner than
/// min_thickness near the leading or trailing edge stays feasible as long as
/// it does not get thinner there.
struct ThicknessConstraint {
  std::vector<ThicknessRange> x_ranges;
  double min_thickness = 0.01;
  std::vector<Vec2> reference;  // optional (x, thickness) table, ascending x

  void validate() const {
    if (!(min_thickness > 0.0)) throw ConfigError("thickness constraint: min_thickness must be > 0");
    for (const auto& r : x_ranges)
      if (!(r.lo >= 0.0 && r.hi <= 1.0 && r.lo <= r.hi))
        throw ConfigError("thickness constraint: interval outside [0,1]");
  }
};

struct ThicknessReport {
  bool pass = true;
  std::vector<double> violating_x;
};

// ---------------------------------------------------------------------------

namespace detail {

/// Linear interpolation of y along a surface at abscissa x.
inline double interp_y(std::span<const Vec2> surf, double x) {
  if (x <= surf.front().x) return surf.front().y;
  if (x >= surf.back().x) return surf.back().y;
  auto it = std::lower_bound(surf.begin(), surf.end(), x, [](const Vec2& p, double v) { return p.x < v; });
  const auto& b = *it;
  if (b.x == x) return b.y;
  const auto& a = *(it - 1);
  const double w = (x - a.x) / (b.x - a.x);
  return a.y + w * (b.y - a.y);
}

inline bool strictly_increasing_x(std::span<const Vec2> s) {
  for (std::size_t i = 1; i < s.size(); ++i)
    if (!(s[i].x > s[i - 1].x)) return false;
  return true;
}

}  // namespace detail

/// Local thickness y_upper(x) - y_lower(x) at each upper-surface station.
inline std::vector<Vec2> thickness_distribution(const AirfoilShape& shape) {
  std::vector<Vec2> out;
  out.reserve(shape.upper.size());
  for (const auto& p : shape.upper) out.push_back({p.x, p.y - detail::interp_y(shape.lower, p.x)});
  return out;
}

/// Checks the documented invariants; throws GeometryError with the reason.
inline void validate_shape(const AirfoilShape& shape) {
  if (shape.upper.size() < 3 || shape.lower.size() < 3) throw GeometryError("shape: each surface needs >= 3 points");
  if (!detail::strictly_increasing_x(shape.upper) || !detail::strictly_increasing_x(shape.lower))
    throw GeometryError("shape: x must be strictly increasing along each surface");
  if (shape.upper.front().x != shape.lower.front().x || shape.upper.back().x != shape.lower.back().x)
    throw GeometryError("shape: surfaces must share leading and trailing edge x");
}

/// Non-intersection: y_upper >= y_lower at every upper station.
inline bool surfaces_ordered(const AirfoilShape& shape) {
  for (const auto& p : shape.upper)
    if (p.y < detail::interp_y(shape.lower, p.x)) return false;
  for (const auto& p : shape.lower)
    if (detail::interp_y(shape.upper, p.x) < p.y) return false;
  return true;
}

/// SA(x) = exp(-(x - x_target)^2 / (2 delta^2))
inline double smoothing_weight(double x, double x_target, double delta) noexcept {
  const double d = x - x_target;
  return std::exp(-d * d / (2.0 * delta * delta));
}

inline void validate_action(const DeformAction& a, const ActionBounds& bounds) {
  if (!(a.x_target > 0.0 && a.x_target < 1.0)) throw DomainError("action: x_target must lie in (0,1)");
  if (std::abs(a.y_upper_change) > bounds.max_step || std::abs(a.y_lower_change) > bounds.max_step)
    throw DomainError("action: displacement exceeds max_step");
  if (!(a.delta >= bounds.delta_min && a.delta <= bounds.delta_max)) throw DomainError("action: delta out of range");
}

struct ActionResult {
  AirfoilShape shape;
  bool feasible = true;  // false when the surfaces would cross
};

/// y' = y + y_change * SA(x) on every sample of each surface. The shared
/// leading- and trailing-edge points belong to both surfaces and move by the
/// mean of the two displacements, which keeps the contour closed.
inline ActionResult apply_action(const AirfoilShape& shape, const DeformAction& action,
                                 const ActionBounds& bounds = {}) {
  validate_action(action, bounds);
  ActionResult r{shape, true};
  auto bump = [&](std::vector<Vec2>& surf, double dy) {
    for (std::size_t i = 1; i + 1 < surf.size(); ++i)
      surf[i].y += dy * smoothing_weight(surf[i].x, action.x_target, action.delta);
  };
  bump(r.shape.upper, action.y_upper_change);
  bump(r.shape.lower, action.y_lower_change);
  const double mean = 0.5 * (action.y_upper_change + action.y_lower_change);
  for (std::size_t i : {std::size_t{0}, shape.upper.size() - 1}) {
    const double dy = mean * smoothing_weight(shape.upper[i].x, action.x_target, action.delta);
    r.shape.upper[i].y += dy;
    r.shape.lower[i == 0 ? 0 : shape.lower.size() - 1].y = r.shape.upper[i].y;
  }
  r.feasible = surfaces_ordered(r.shape);
  return r;
}

/// Stations are upper-surface x positions excluding the shared LE/TE points,
/// where the closed contour has zero thickness by construction.
inline ThicknessReport check_thickness(const AirfoilShape& shape, const ThicknessConstraint& c) {
  ThicknessReport rep;
  const std::span<const Vec2> ref(c.reference);
  for (std::size_t i = 1; i + 1 < shape.upper.size(); ++i) {
    const double x = shape.upper[i].x;
    const bool constrained =
        std::any_of(c.x_ranges.begin(), c.x_ranges.end(), [x](const ThicknessRange& r) { return x >= r.lo && x <= r.hi; });
    if (!constrained) continue;
    double required = c.min_thickness;
    if (!ref.empty()) required = std::min(required, detail::interp_y(ref, x));
    const double thick = shape.upper[i].y - detail::interp_y(shape.lower, x);
    // 1e-12 slack so a shape equal to its own reference always passes.
    if (thick < required - 1e-12) {
      rep.pass = false;
      rep.violating_x.push_back(x);
    }
  }
  return rep;
}

struct CurvatureResult {
  std::vector<double> kappa;    // theta_i / |sp_i sp_{i+1}|
  std::vector<double> turning;  // theta_i
  double total_kappa = 0.0;
  double total_turning = 0.0;
};

/// Discrete curvature at every interior sample (every sample when closed).
/// theta_i is the unsigned angle between sp_{i-1}->sp_i and sp_i->sp_{i+1}.
inline CurvatureResult discrete_curvature(std::span<const Vec2> pts, bool closed = false) {
  const std::size_t n = pts.size();
  if (n < 3) throw GeometryError("discrete_curvature: need >= 3 points");
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (pts[i] == pts[i + 1]) throw GeometryError("discrete_curvature: duplicated consecutive points");
  if (closed && pts.front() == pts.back()) throw GeometryError("discrete_curvature: closed loop repeats first point");

  CurvatureResult r;
  const std::size_t first = closed ? 0 : 1;
  const std::size_t last = closed ? n : n - 1;
  for (std::size_t i = first; i < last; ++i) {
    const Vec2& a = pts[(i + n - 1) % n];
    const Vec2& b = pts[i];
    const Vec2& c = pts[(i + 1) % n];
    const Vec2 u = b - a;
    const Vec2 v = c - b;
    const double theta = std::atan2(std::abs(cross(u, v)), dot(u, v));
    const double k = theta / norm(v);
    r.turning.push_back(theta);
    r.kappa.push_back(k);
    r.total_turning += theta;
    r.total_kappa += k;
  }
  return r;
}

/// Symmetric NACA 4-digit section, closed trailing edge, cosine clustering.
/// n_points is the total count; each surface gets n_points/2 stations
/// including the shared leading and trailing edge points.
inline AirfoilShape naca4_init(double thickness, int n_points) {
  if (!(thickness > 0.0 && thickness <= 0.3)) throw DomainError("naca4_init: thickness must be in (0, 0.3]");
  if (n_points < 6 || n_points % 2 != 0) throw DomainError("naca4_init: n_points must be even and >= 6");
  const int per_surface = n_points / 2;
  AirfoilShape s;
  s.upper.reserve(static_cast<std::size_t>(per_surface));
  s.lower.reserve(static_cast<std::size_t>(per_surface));
  for (int i = 0; i < per_surface; ++i) {
    const double beta = kPi * static_cast<double>(i) / static_cast<double>(per_surface - 1);
    double x = 0.5 * (1.0 - std::cos(beta));
    if (i == per_surface - 1) x = 1.0;
    const double yt = 5.0 * thickness *
                      (0.2969 * std::sqrt(x) - 0.1260 * x - 0.3516 * x * x + 0.2843 * x * x * x -
                       0.1036 * x * x * x * x);
    const double half = (i == 0 || i == per_surface - 1) ? 0.0 : yt;
    s.upper.push_back({x, half});
    s.lower.push_back({x, -half});
  }
  return s;
}

// ---------------------------------------------------------------------------
// Shape file: "AIRFOIL <n_upper> <n_lower>" then x y pairs, upper then lower.
// ---------------------------------------------------------------------------

inline void write_shape(std::ostream& os, const AirfoilShape& s) {
  os << "AIRFOIL " << s.upper.size() << ' ' << s.lower.size() << '\n';
  for (const auto* surf : {&s.upper, &s.lower})
    for (const auto& p : *surf) os << format_double(p.x) << ' ' << format_double(p.y) << '\n';
}

inline AirfoilShape read_shape(std::istream& is) {
  std::string tag;
  std::size_t nu = 0;
  std::size_t nl = 0;
  if (!(is >> tag >> nu >> nl) || tag != "AIRFOIL") throw IoError("shape file: bad header");
  AirfoilShape s;
  auto read_pts = [&](std::vector<Vec2>& out, std::size_t n) {
    out.resize(n);
    for (auto& p : out) {
      std::string xs;
      std::string ys;
      if (!(is >> xs >> ys)) throw IoError("shape file: truncated coordinates");
      p = {parse_double(xs), parse_double(ys)};
    }
  };
  read_pts(s.upper, nu);
  read_pts(s.lower, nl);
  return s;
}

inline void save_shape(const std::string& path, const AirfoilShape& s) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  write_shape(os, s);
}

inline AirfoilShape load_shape(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  return read_shape(is);
}

}  // namespace shapeopt::geometry

namespace shapeopt::geometry {

/// Upper (curve 0) and lower (curve 1) Bezier curves of one airfoil.
struct SurfaceCurves {
  BezierCurve upper;
  BezierCurve lower;

  const BezierCurve& operator[](int id) const { return id == 0 ? upper : lower; }
};

/// Regularized fit of both surfaces with endpoints pinned so the curves meet
/// at the leading and trailing edges.
inline SurfaceCurves fit_surfaces(const AirfoilShape& shape, int degree, double lambda_s) {
  const FitOptions pinned{.pin_endpoints = true};
  return {fit_bezier_regularized(shape.upper, degree, lambda_s, pinned),
          fit_bezier_regularized(shape.lower, degree, lambda_s, pinned)};
}

/// Samples moved onto the curves at their own chord-length parameters, so
/// the sampled shape carries no detail the regularized fit rejected.
/// Throws GeometryError when the result is not a valid shape.
inline AirfoilShape resample_on_curves(const AirfoilShape& shape, const SurfaceCurves& curves) {
  AirfoilShape out = shape;
  const auto tu = chord_length_parameters(shape.upper);
  const auto tl = chord_length_parameters(shape.lower);
  for (std::size_t i = 0; i < out.upper.size(); ++i) out.upper[i] = bernstein_eval(curves.upper, tu[i]);
  for (std::size_t i = 0; i < out.lower.size(); ++i) out.lower[i] = bernstein_eval(curves.lower, tl[i]);
  validate_shape(out);
  return out;
}

}  // namespace shapeopt::geometry
