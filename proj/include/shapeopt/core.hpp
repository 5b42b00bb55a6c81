/// @file core.hpp
/// @brief Small shared vocabulary: 2D points, error hierarchy, text helpers.
#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <system_error>
#include <vector>

namespace shapeopt {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(const Vec2& o) noexcept { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(const Vec2& o) noexcept { x -= o.x; y -= o.y; return *this; }
  constexpr Vec2& operator*=(double s) noexcept { x *= s; y *= s; return *this; }
  friend constexpr Vec2 operator+(Vec2 a, const Vec2& b) noexcept { return a += b; }
  friend constexpr Vec2 operator-(Vec2 a, const Vec2& b) noexcept { return a -= b; }
  friend constexpr Vec2 operator*(Vec2 a, double s) noexcept { return a *= s; }
  friend constexpr Vec2 operator*(double s, Vec2 a) noexcept { return a *= s; }
  friend constexpr Vec2 operator-(const Vec2& a) noexcept { return {-a.x, -a.y}; }
  friend constexpr bool operator==(const Vec2&, const Vec2&) = default;
};

constexpr double dot(const Vec2& a, const Vec2& b) noexcept { return a.x * b.x + a.y * b.y; }
constexpr double cross(const Vec2& a, const Vec2& b) noexcept { return a.x * b.y - a.y * b.x; }
inline double norm(const Vec2& a) noexcept { return std::hypot(a.x, a.y); }
inline double distance(const Vec2& a, const Vec2& b) noexcept { return norm(b - a); }

/// Twice the signed area of (a, b, c); positive when counterclockwise.
constexpr double orient2d(const Vec2& a, const Vec2& b, const Vec2& c) noexcept {
  return cross(b - a, c - a);
}

// ---------------------------------------------------------------------------
// Errors. Every failure the library reports derives from shapeopt::Error.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Least-squares system could not be solved (rank deficiency).
class FitError : public Error {
 public:
  using Error::Error;
};

/// Degenerate geometric input (duplicated points, self intersection).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Non-physical flow state (rho <= 0 or p <= 0).
class StateError : public Error {
 public:
  StateError(const std::string& what, long cell = -1) : Error(what), cell_(cell) {}
  long cell() const noexcept { return cell_; }

 private:
  long cell_;
};

/// Shape mismatch or misuse in the network kernel.
class StructureError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver gave up; carries the residual norms it went through.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, std::vector<double> history = {}) : Error(what), history_(std::move(history)) {}
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

/// Shortest decimal representation that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw IoError("cannot format double");
  return std::string(buf, end);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw IoError("not a number: '" + std::string(s) + "'");
  return v;
}

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace shapeopt
