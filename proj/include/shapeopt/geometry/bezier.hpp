/// @file bezier.hpp
/// @brief Bezier curves in Bernstein form: evaluation, x-inversion and
/// least-squares fitting with an optional second-difference penalty.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "shapeopt/core.hpp"

namespace shapeopt::geometry {

struct BezierCurve {
  std::vector<Vec2> control_points;

  int degree() const noexcept { return static_cast<int>(control_points.size()) - 1; }

  /// True when control-point x-coordinates never decrease, which makes x(t)
  /// monotone and therefore invertible.
  bool x_monotone() const noexcept {
    return std::is_sorted(control_points.begin(), control_points.end(),
                          [](const Vec2& a, const Vec2& b) { return a.x < b.x; });
  }
};

namespace detail {

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

/// Bernstein basis values b_{i,n}(t), i = 0..n.
inline void bernstein_basis(int n, double t, std::span<double> out) {
  const double s = 1.0 - t;
  for (int i = 0; i <= n; ++i)
    out[static_cast<std::size_t>(i)] = binomial(n, i) * std::pow(s, n - i) * std::pow(t, i);
}

}  // namespace detail

/// B(t) = sum_i C(n,i) (1-t)^(n-i) t^i CP_i.
inline Vec2 bernstein_eval(const BezierCurve& curve, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("bernstein_eval: t outside [0,1]");
  const int n = curve.degree();
  if (n < 1) throw DomainError("bernstein_eval: curve degree must be >= 1");
  std::vector<double> b(static_cast<std::size_t>(n + 1));
  detail::bernstein_basis(n, t, b);
  Vec2 p;
  for (int i = 0; i <= n; ++i) p += b[static_cast<std::size_t>(i)] * curve.control_points[static_cast<std::size_t>(i)];
  return p;
}

/// dB/dt.
inline Vec2 bernstein_derivative(const BezierCurve& curve, double t) {
  const int n = curve.degree();
  if (n < 1) throw DomainError("bernstein_derivative: curve degree must be >= 1");
  std::vector<double> b(static_cast<std::size_t>(n));
  detail::bernstein_basis(n - 1, std::clamp(t, 0.0, 1.0), b);
  Vec2 d;
  for (int i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    d += (static_cast<double>(n) * b[k]) * (curve.control_points[k + 1] - curve.control_points[k]);
  }
  return d;
}

/// Parameter t with x(B(t)) = x. Bisection safeguarded Newton on the
/// x-component; requires an x-monotone curve.
inline double inverse_param(const BezierCurve& curve, double x) {
  const auto& cp = curve.control_points;
  if (curve.degree() < 1) throw DomainError("inverse_param: curve degree must be >= 1");
  if (!curve.x_monotone()) throw DomainError("inverse_param: control points are not x-monotone");
  const double x0 = cp.front().x;
  const double x1 = cp.back().x;
  if (!(x >= x0 && x <= x1)) throw DomainError("inverse_param: x outside curve range");
  if (x == x0) return 0.0;
  if (x == x1) return 1.0;

  double lo = 0.0;
  double hi = 1.0;
  double t = (x - x0) / (x1 - x0);
  for (int it = 0; it < 200; ++it) {
    const double fx = bernstein_eval(curve, t).x - x;
    if (std::abs(fx) <= 1e-14) return t;
    if (fx > 0.0) hi = t; else lo = t;
    const double dx = bernstein_derivative(curve, t).x;
    double next = (dx > 0.0) ? t - fx / dx : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (hi - lo < 1e-16) return next;
    t = next;
  }
  return t;
}

/// Chord-length parameters normalized to [0, 1].
inline std::vector<double> chord_length_parameters(std::span<const Vec2> samples) {
  std::vector<double> t(samples.size(), 0.0);
  for (std::size_t j = 1; j < samples.size(); ++j) t[j] = t[j - 1] + distance(samples[j - 1], samples[j]);
  const double total = t.back();
  if (!(total > 0.0)) throw FitError("fit_bezier: samples have zero total length");
  for (auto& v : t) v /= total;
  t.back() = 1.0;
  return t;
}

struct FitOptions {
  /// Force CP_0 and CP_n onto the first and last samples. Upper and lower
  /// airfoil curves need this to keep the contour closed at both ends.
  bool pin_endpoints = false;
};

namespace detail {

inline BezierCurve solve_fit(std::span<const Vec2> samples, int degree, double lambda_s,
                             const FitOptions& opts) {
  if (degree < 1) throw FitError("fit_bezier: degree must be >= 1");
  const auto m = static_cast<Eigen::Index>(samples.size());
  const Eigen::Index ncp = degree + 1;
  if (m < ncp) throw FitError("fit_bezier: need at least degree+1 samples");
  if (lambda_s < 0.0) throw FitError("fit_bezier_regularized: lambda_s must be >= 0");

  const auto t = chord_length_parameters(samples);
  Eigen::MatrixXd basis(m, ncp);
  std::vector<double> b(static_cast<std::size_t>(ncp));
  for (Eigen::Index j = 0; j < m; ++j) {
    bernstein_basis(degree, t[static_cast<std::size_t>(j)], b);
    for (Eigen::Index i = 0; i < ncp; ++i) basis(j, i) = b[static_cast<std::size_t>(i)];
  }
  Eigen::MatrixXd rhs(m, 2);
  for (Eigen::Index j = 0; j < m; ++j) {
    rhs(j, 0) = samples[static_cast<std::size_t>(j)].x;
    rhs(j, 1) = samples[static_cast<std::size_t>(j)].y;
  }

  // Second-difference operator rows CP_{i-1} - 2 CP_i + CP_{i+1}.
  const Eigen::Index nreg = (lambda_s > 0.0) ? degree - 1 : 0;
  Eigen::MatrixXd system(m + nreg, ncp);
  system.setZero();
  system.topRows(m) = basis;
  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(m + nreg, 2);
  target.topRows(m) = rhs;
  const double w = std::sqrt(lambda_s);
  for (Eigen::Index i = 0; i < nreg; ++i) {
    system(m + i, i) = w;
    system(m + i, i + 1) = -2.0 * w;
    system(m + i, i + 2) = w;
  }

  BezierCurve out;
  out.control_points.resize(static_cast<std::size_t>(ncp));
  if (opts.pin_endpoints) {
    const Eigen::RowVector2d first(rhs(0, 0), rhs(0, 1));
    const Eigen::RowVector2d last(rhs(m - 1, 0), rhs(m - 1, 1));
    target -= system.col(0) * first + system.col(ncp - 1) * last;
    if (ncp > 2) {
      Eigen::MatrixXd inner = system.middleCols(1, ncp - 2);
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(inner);
      if (qr.rank() < ncp - 2) throw FitError("fit_bezier: rank-deficient least-squares system");
      Eigen::MatrixXd sol = qr.solve(target);
      for (Eigen::Index i = 1; i < ncp - 1; ++i)
        out.control_points[static_cast<std::size_t>(i)] = {sol(i - 1, 0), sol(i - 1, 1)};
    }
    out.control_points.front() = {first(0), first(1)};
    out.control_points.back() = {last(0), last(1)};
    return out;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(system);
  if (qr.rank() < ncp) throw FitError("fit_bezier: rank-deficient least-squares system");
  Eigen::MatrixXd sol = qr.solve(target);
  for (Eigen::Index i = 0; i < ncp; ++i) out.control_points[static_cast<std::size_t>(i)] = {sol(i, 0), sol(i, 1)};
  return out;
}

}  // namespace detail

/// Least-squares fit min sum_j |B(t_j) - sp_j|^2 with chord-length t_j.
inline BezierCurve fit_bezier(std::span<const Vec2> samples, int degree, const FitOptions& opts = {}) {
  return detail::solve_fit(samples, degree, 0.0, opts);
}

/// Adds lambda_s * sum_i |CP_{i-1} - 2 CP_i + CP_{i+1}|^2 to the fit objective.
inline BezierCurve fit_bezier_regularized(std::span<const Vec2> samples, int degree, double lambda_s,
                                          const FitOptions& opts = {}) {
  return detail::solve_fit(samples, degree, lambda_s, opts);
}

/// sum_i |CP_{i-1} - 2 CP_i + CP_{i+1}|^2
inline double second_difference_penalty(const BezierCurve& curve) {
  const auto& cp = curve.control_points;
  double s = 0.0;
  for (std::size_t i = 1; i + 1 < cp.size(); ++i) {
    const Vec2 d = cp[i - 1] - 2.0 * cp[i] + cp[i + 1];
    s += dot(d, d);
  }
  return s;
}

/// sum_j |B(t_j) - sp_j|^2 with the same chord-length parameters the fit uses.
inline double fit_residual(const BezierCurve& curve, std::span<const Vec2> samples) {
  const auto t = chord_length_parameters(samples);
  double s = 0.0;
  for (std::size_t j = 0; j < samples.size(); ++j) {
    const Vec2 d = bernstein_eval(curve, t[j]) - samples[j];
    s += dot(d, d);
  }
  return s;
}

}  // namespace shapeopt::geometry
