/// @file flux.hpp
/// @brief Rusanov (local Lax-Friedrichs) numerical flux and the wall and
/// far-field boundary fluxes, each with exact derivatives.
#pragma once

#include "shapeopt/euler/gas.hpp"

namespace shapeopt::euler {

/// Flux value with its derivatives with respect to the left and right states.
struct FluxJacobian {
  State flux;
  Block d_left;
  Block d_right;
};

namespace detail {
inline void require_physical(const State& u, const char* who) {
  if (!is_physical(u)) throw StateError(std::string(who) + ": non-physical state");
}
}  // namespace detail

/// 0.5 (F(uL) + F(uR)) . n - 0.5 lambda (uR - uL), lambda the larger of the
/// two wave speeds |v . n| + c.
inline State numerical_flux(const State& ul, const State& ur, const Vec2& n, double gamma = kGamma) {
  detail::require_physical(ul, "numerical_flux");
  detail::require_physical(ur, "numerical_flux");
  const double lam = std::max(max_wave_speed(ul, n, gamma), max_wave_speed(ur, n, gamma));
  return 0.5 * (normal_flux(ul, n, gamma) + normal_flux(ur, n, gamma)) - 0.5 * lam * (ur - ul);
}

/// Rusanov flux and its exact derivatives. The wave speed is differentiated
/// through the side that attains the maximum.
inline FluxJacobian numerical_flux_jacobian(const State& ul, const State& ur, const Vec2& n, double gamma = kGamma) {
  detail::require_physical(ul, "numerical_flux");
  detail::require_physical(ur, "numerical_flux");
  const double sl = max_wave_speed(ul, n, gamma);
  const double sr = max_wave_speed(ur, n, gamma);
  const bool left_max = sl >= sr;
  const double lam = left_max ? sl : sr;
  const State jump = ur - ul;
  FluxJacobian r;
  r.flux = 0.5 * (normal_flux(ul, n, gamma) + normal_flux(ur, n, gamma)) - 0.5 * lam * jump;
  r.d_left = 0.5 * normal_flux_jacobian(ul, n, gamma) + 0.5 * lam * Block::Identity();
  r.d_right = 0.5 * normal_flux_jacobian(ur, n, gamma) - 0.5 * lam * Block::Identity();
  if (left_max)
    r.d_left -= 0.5 * jump * max_wave_speed_gradient(ul, n, gamma);
  else
    r.d_right -= 0.5 * jump * max_wave_speed_gradient(ur, n, gamma);
  return r;
}

/// Interior state reflected across the wall: normal momentum negated.
inline State mirror_state(const State& u, const Vec2& n) noexcept {
  const double mn = u[1] * n.x + u[2] * n.y;
  return {u[0], u[1] - 2.0 * mn * n.x, u[2] - 2.0 * mn * n.y, u[3]};
}

inline Block mirror_matrix(const Vec2& n) noexcept {
  Block m = Block::Identity();
  m(1, 1) -= 2.0 * n.x * n.x;
  m(1, 2) -= 2.0 * n.x * n.y;
  m(2, 1) -= 2.0 * n.y * n.x;
  m(2, 2) -= 2.0 * n.y * n.y;
  return m;
}

/// Slip wall: Rusanov flux against the mirror state. Mass and energy fluxes
/// vanish identically.
inline State wall_flux(const State& u, const Vec2& n, double gamma = kGamma) {
  return numerical_flux(u, mirror_state(u, n), n, gamma);
}

/// Wall flux and its derivative with respect to the interior state (d_right unused).
inline FluxJacobian wall_flux_jacobian(const State& u, const Vec2& n, double gamma = kGamma) {
  auto j = numerical_flux_jacobian(u, mirror_state(u, n), n, gamma);
  j.d_left += j.d_right * mirror_matrix(n);
  j.d_right.setZero();
  return j;
}

/// Far field: Rusanov flux against the free-stream state.
inline State farfield_flux(const State& u, const FreeStream& fs, const Vec2& n) {
  return numerical_flux(u, freestream_state(fs), n, fs.gamma);
}

inline FluxJacobian farfield_flux_jacobian(const State& u, const FreeStream& fs, const Vec2& n) {
  auto j = numerical_flux_jacobian(u, freestream_state(fs), n, fs.gamma);
  j.d_right.setZero();
  return j;
}

}  // namespace shapeopt::euler
