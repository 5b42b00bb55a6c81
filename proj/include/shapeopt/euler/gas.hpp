/// @file gas.hpp
/// @brief Ideal-gas state algebra for the 2D Euler equations: conservative
/// and primitive variables, pressure, sound speed and the physical normal
/// flux with its Jacobian.
#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "shapeopt/core.hpp"

namespace shapeopt::euler {

/// Conservative state (rho, rho*u_x, rho*u_y, E).
using State = Eigen::Vector4d;
using Block = Eigen::Matrix4d;

inline constexpr double kGamma = 1.4;

struct Primitive {
  double rho = 1.0;
  double ux = 0.0;
  double uy = 0.0;
  double p = 1.0;
};

/// Free-stream conditions. Nondimensional: rho = 1, |V| = mach, p = 1/gamma,
/// so the free-stream sound speed is 1; chord 1.
struct FreeStream {
  double mach = 0.85;
  double aoa_deg = 0.0;
  double gamma = kGamma;

  double aoa_rad() const noexcept { return aoa_deg * kPi / 180.0; }
  /// Unit vector along the free stream (drag direction).
  Vec2 drag_dir() const noexcept { return {std::cos(aoa_rad()), std::sin(aoa_rad())}; }
  /// Unit vector normal to the free stream (lift direction).
  Vec2 lift_dir() const noexcept { return {-std::sin(aoa_rad()), std::cos(aoa_rad())}; }
  double dynamic_pressure() const noexcept { return 0.5 * mach * mach; }
};

inline void validate(const FreeStream& fs) {
  if (!(fs.mach > 0.0) || !std::isfinite(fs.mach)) throw DomainError("free stream: mach must be > 0");
  if (!std::isfinite(fs.aoa_deg)) throw DomainError("free stream: angle of attack must be finite");
  if (fs.gamma != kGamma) throw DomainError("free stream: gamma is fixed at 1.4");
}

inline State prim_to_cons(const Primitive& w, double gamma = kGamma) {
  if (!(w.rho > 0.0) || !(w.p > 0.0)) throw StateError("prim_to_cons: rho and p must be positive");
  return {w.rho, w.rho * w.ux, w.rho * w.uy, w.p / (gamma - 1.0) + 0.5 * w.rho * (w.ux * w.ux + w.uy * w.uy)};
}

/// Pressure without a positivity check.
inline double pressure(const State& u, double gamma = kGamma) noexcept {
  return (gamma - 1.0) * (u[3] - 0.5 * (u[1] * u[1] + u[2] * u[2]) / u[0]);
}

inline bool is_physical(const State& u, double gamma = kGamma) noexcept {
  return u.allFinite() && u[0] > 0.0 && pressure(u, gamma) > 0.0;
}

inline Primitive cons_to_prim(const State& u, double gamma = kGamma) {
  if (!is_physical(u, gamma)) throw StateError("cons_to_prim: non-physical state");
  return {u[0], u[1] / u[0], u[2] / u[0], pressure(u, gamma)};
}

inline State freestream_state(const FreeStream& fs) {
  const Vec2 d = fs.drag_dir();
  return prim_to_cons({1.0, fs.mach * d.x, fs.mach * d.y, 1.0 / fs.gamma}, fs.gamma);
}

inline double sound_speed(const State& u, double gamma = kGamma) noexcept {
  return std::sqrt(gamma * pressure(u, gamma) / u[0]);
}

/// Gradient of the pressure with respect to the conservative state.
inline Eigen::RowVector4d pressure_gradient(const State& u, double gamma = kGamma) noexcept {
  const double vx = u[1] / u[0];
  const double vy = u[2] / u[0];
  return (gamma - 1.0) * Eigen::RowVector4d(0.5 * (vx * vx + vy * vy), -vx, -vy, 1.0);
}

/// Physical flux projected on n: F(u) . n.
inline State normal_flux(const State& u, const Vec2& n, double gamma = kGamma) noexcept {
  const double vn = (u[1] * n.x + u[2] * n.y) / u[0];
  const double p = pressure(u, gamma);
  return {u[0] * vn, u[1] * vn + p * n.x, u[2] * vn + p * n.y, (u[3] + p) * vn};
}

/// d(F(u) . n) / du.
inline Block normal_flux_jacobian(const State& u, const Vec2& n, double gamma = kGamma) noexcept {
  const double vx = u[1] / u[0];
  const double vy = u[2] / u[0];
  const double vn = vx * n.x + vy * n.y;
  const double phi = 0.5 * (gamma - 1.0) * (vx * vx + vy * vy);
  const double h = (u[3] + pressure(u, gamma)) / u[0];
  const double g1 = gamma - 1.0;
  Block a;
  a << 0.0, n.x, n.y, 0.0,                                                              //
      phi * n.x - vx * vn, vn - (gamma - 2.0) * vx * n.x, vx * n.y - g1 * vy * n.x, g1 * n.x,  //
      phi * n.y - vy * vn, vy * n.x - g1 * vx * n.y, vn - (gamma - 2.0) * vy * n.y, g1 * n.y,  //
      vn * (phi - h), h * n.x - g1 * vx * vn, h * n.y - g1 * vy * vn, gamma * vn;
  return a;
}

/// Fastest signal speed |v . n| + c.
inline double max_wave_speed(const State& u, const Vec2& n, double gamma = kGamma) noexcept {
  return std::abs((u[1] * n.x + u[2] * n.y) / u[0]) + sound_speed(u, gamma);
}

inline Eigen::RowVector4d max_wave_speed_gradient(const State& u, const Vec2& n, double gamma = kGamma) noexcept {
  const double rho = u[0];
  const double vn = (u[1] * n.x + u[2] * n.y) / rho;
  const double c = sound_speed(u, gamma);
  const double s = vn > 0.0 ? 1.0 : (vn < 0.0 ? -1.0 : 0.0);
  const Eigen::RowVector4d dvn(-vn / rho, n.x / rho, n.y / rho, 0.0);
  Eigen::RowVector4d dc = (gamma / (2.0 * c * rho)) * pressure_gradient(u, gamma);
  dc[0] -= gamma * pressure(u, gamma) / (2.0 * c * rho * rho);
  return s * dvn + dc;
}

}  // namespace shapeopt::euler
