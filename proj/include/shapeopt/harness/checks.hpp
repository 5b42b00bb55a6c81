/// @file checks.hpp
/// @brief Invariant suites shared by the `validate` subcommand and the
/// acceptance runner. Each check returns its verdict and the measured
/// numbers behind it.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "shapeopt/dwr/dwr.hpp"
#include "shapeopt/geometry/bezier.hpp"
#include "shapeopt/geometry/shape.hpp"
#include "shapeopt/harness/config.hpp"
#include "shapeopt/mesh/deform.hpp"
#include "shapeopt/mesh/omesh.hpp"
#include "shapeopt/rl/reward.hpp"

namespace shapeopt::harness {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

inline euler::FlowField random_field(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> rho(0.5, 1.5), v(-1.0, 1.0), p(0.3, 1.5);
  euler::FlowField f;
  f.u.resize(static_cast<Eigen::Index>(4 * n));
  for (std::size_t i = 0; i < n; ++i) f.set_cell(i, euler::prim_to_cons({rho(rng), v(rng), v(rng), p(rng)}));
  return f;
}

inline Eigen::VectorXd random_direction(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  return Eigen::VectorXd::NullaryExpr(n, [&] { return nd(rng); });
}

}  // namespace detail

/// Small NACA0012 O-mesh for derivative checks.
inline mesh::UnstructuredMesh small_check_mesh() {
  const auto s = geometry::naca4_init(0.12, 60);
  auto m = mesh::generate_omesh(s, 35.0, 12);
  mesh::update_boundary(m, geometry::fit_surfaces(s, 12, 1e-3));
  return m;
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Samples of uniformly parameterized straight Bezier curves (chord-length
/// parameters are then exact) are fitted back; worst control-point error.
inline CheckResult check_bezier_roundtrip(std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int degree : {3, 5, 8, 12, 16}) {
    for (int trial = 0; trial < 4; ++trial) {
      const Vec2 a{u(rng), u(rng)};
      const Vec2 b{a.x + 1.0 + u(rng) * 0.5, a.y + u(rng)};
      geometry::BezierCurve c;
      for (int i = 0; i <= degree; ++i) c.control_points.push_back(a + (static_cast<double>(i) / degree) * (b - a));
      std::vector<Vec2> samples;
      const int m = 4 * (degree + 1);
      for (int j = 0; j < m; ++j) samples.push_back(geometry::bernstein_eval(c, static_cast<double>(j) / (m - 1)));
      const auto fit = geometry::fit_bezier(samples, degree);
      for (std::size_t i = 0; i < c.control_points.size(); ++i)
        worst = std::max(worst, norm(fit.control_points[i] - c.control_points[i]));
    }
  }
  return {"bezier round trip", worst <= 1e-8, "max control point error " + detail::sci(worst) + " (tol 1e-8)"};
}

/// Regularized fit against the plain fit on noisy samples, several seeds.
inline CheckResult check_regularized_fit(double lambda_s = 1e-3, std::uint64_t seed = 2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.01);
  int reduced = 0;
  double worst_ratio = 0.0;
  const int trials = 10;
  for (int k = 0; k < trials; ++k) {
    std::vector<Vec2> s;
    for (int j = 0; j < 80; ++j) {
      const double x = j / 79.0;
      s.push_back({x, 0.2 * std::sin(3.0 * x) + noise(rng)});
    }
    const double plain = geometry::second_difference_penalty(geometry::fit_bezier(s, 12));
    const double reg = geometry::second_difference_penalty(geometry::fit_bezier_regularized(s, 12, lambda_s));
    if (reg < plain) ++reduced;
    worst_ratio = std::max(worst_ratio, reg / plain);
  }
  return {"regularized fit smoother", reduced == trials,
          std::to_string(reduced) + "/" + std::to_string(trials) + " reduced, worst penalty ratio " + detail::sci(worst_ratio)};
}

inline CheckResult check_circle_curvature() {
  std::vector<Vec2> p;
  for (int i = 0; i < 64; ++i) {
    const double a = 2.0 * kPi * i / 64.0;
    p.push_back({2.0 * std::cos(a), 2.0 * std::sin(a)});
  }
  const auto c = geometry::discrete_curvature(p, true);
  double worst = 0.0;
  for (double k : c.kappa) worst = std::max(worst, std::abs(k - 0.5) / 0.5);
  return {"64-gon curvature", worst <= 0.02, "max relative deviation from 0.5: " + detail::sci(worst) + " (tol 2e-2)"};
}

// ---------------------------------------------------------------------------
// Solver derivatives
// ---------------------------------------------------------------------------

/// Central-difference Jacobian-vector products at random physical states.
inline CheckResult check_jacobian_fd(const mesh::UnstructuredMesh& m, int trials = 20, std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  const euler::FvMesh fv(m);
  const euler::FreeStream fs{0.85, 1.25};
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    const auto f = detail::random_field(fv.num_cells(), rng);
    const Eigen::VectorXd v = detail::random_direction(f.u.size(), rng);
    const double eps = 1e-6;
    const Eigen::VectorXd fd = (euler::assemble_residual(fv, euler::FlowField{f.u + eps * v}, fs) -
                                euler::assemble_residual(fv, euler::FlowField{f.u - eps * v}, fs)) /
                               (2.0 * eps);
    const Eigen::VectorXd jv = euler::assemble_jacobian(fv, f, fs) * v;
    worst = std::max(worst, (jv - fd).norm() / fd.norm());
  }
  return {"jacobian finite difference", worst <= 1e-6,
          std::to_string(trials) + " states, max relative error " + detail::sci(worst) + " (tol 1e-6)"};
}

/// Functional gradients (drag, lift, ratio) against central differences.
inline CheckResult check_gradient_fd(const mesh::UnstructuredMesh& m, int trials = 20, std::uint64_t seed = 4) {
  std::mt19937_64 rng(seed);
  const euler::FvMesh fv(m);
  const euler::FreeStream fs{0.85, 1.25};
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    const auto f = detail::random_field(fv.num_cells(), rng);
    const Eigen::VectorXd v = 0.01 * detail::random_direction(f.u.size(), rng);
    for (auto j : {dwr::Functional::drag, dwr::Functional::lift, dwr::Functional::ratio}) {
      const double eps = 1e-6;
      const double fd = (dwr::functional_value(fv, euler::FlowField{f.u + eps * v}, fs, j) -
                         dwr::functional_value(fv, euler::FlowField{f.u - eps * v}, fs, j)) /
                        (2.0 * eps);
      const double an = dwr::functional_gradient(fv, f, fs, j).dot(v);
      worst = std::max(worst, std::abs(an - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return {"functional gradient finite difference", worst <= 1e-6,
          std::to_string(trials) + " states x 3 functionals, max relative error " + detail::sci(worst) + " (tol 1e-6)"};
}

/// z^T (J v) = g^T v for the adjoint of J^T z = g, at random states.
inline CheckResult check_adjoint_identity(const mesh::UnstructuredMesh& m, int trials = 5, std::uint64_t seed = 5) {
  std::mt19937_64 rng(seed);
  const euler::FvMesh fv(m);
  const euler::FreeStream fs{0.85, 0.0};
  const double tol = 1e-8;
  double worst_res = 0.0, worst_ip = 0.0;
  for (int k = 0; k < trials; ++k) {
    const auto f = k == 0 ? euler::uniform_field(fv.num_cells(), fs) : detail::random_field(fv.num_cells(), rng);
    const auto jac = euler::assemble_jacobian(fv, f, fs);
    const auto g = dwr::functional_gradient(fv, f, fs, dwr::Functional::drag);
    const auto z = dwr::solve_adjoint(jac, g, tol);
    worst_res = std::max(worst_res, (euler::SparseMatrix(jac.transpose()) * z - g).norm() / g.norm());
    const Eigen::VectorXd v = detail::random_direction(g.size(), rng);
    const double lhs = z.dot(jac * v), rhs = g.dot(v);
    worst_ip = std::max(worst_ip, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
  }
  return {"adjoint inner-product identity", worst_res <= tol && worst_ip <= tol,
          "max dual residual " + detail::sci(worst_res) + ", max identity error " + detail::sci(worst_ip) + " (tol 1e-8)"};
}

// ---------------------------------------------------------------------------
// Rewards
// ---------------------------------------------------------------------------

namespace detail {

/// Random objective sequences with every value in [0, d0].
template <class F>
void for_random_sequences(int count, std::uint64_t seed, F&& f) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> len(1, 200);
  for (int k = 0; k < count; ++k) {
    const double d0 = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    std::uniform_real_distribution<double> u(0.0, d0);
    std::vector<double> d{d0};
    const int n = len(rng);
    for (int t = 0; t < n; ++t) d.push_back(u(rng));
    f(d);
  }
}

}  // namespace detail

/// Sum of simple rewards equals d0 - dT.
inline CheckResult check_reward_telescoping(int sequences = 1000, std::uint64_t seed = 6) {
  rl::RewardConfig c;
  c.mode = rl::RewardMode::simple;
  double worst = 0.0;
  detail::for_random_sequences(sequences, seed, [&](const std::vector<double>& d) {
    double sum = 0.0;
    for (std::size_t t = 1; t < d.size(); ++t) sum += rl::compute_reward(d[t - 1], d[t], d[0], static_cast<int>(t), c);
    worst = std::max(worst, std::abs(sum - (d.front() - d.back())));
  });
  return {"reward telescoping", worst <= 1e-12,
          std::to_string(sequences) + " sequences, max error " + detail::sci(worst) + " (tol 1e-12)"};
}

/// Summed exploration bonus of the generalized reward stays within
/// d0 * lambda0 / (1 - decay).
inline CheckResult check_exploration_bound(int sequences = 1000, std::uint64_t seed = 7) {
  const rl::RewardConfig gen;
  rl::RewardConfig simple;
  simple.mode = rl::RewardMode::simple;
  int ok = 0;
  double worst = 0.0;
  detail::for_random_sequences(sequences, seed, [&](const std::vector<double>& d) {
    double bonus = 0.0;
    for (std::size_t t = 1; t < d.size(); ++t) {
      const int ti = static_cast<int>(t);
      bonus += rl::compute_reward(d[t - 1], d[t], d[0], ti, gen) - rl::compute_reward(d[t - 1], d[t], d[0], ti, simple);
    }
    const double bound = rl::exploration_bound(d[0], gen);
    if (bonus >= 0.0 && bonus <= bound) ++ok;
    worst = std::max(worst, bonus / bound);
  });
  return {"exploration bonus bound", ok == sequences,
          std::to_string(ok) + "/" + std::to_string(sequences) + " within bound, max bonus/bound " + detail::sci(worst)};
}

// ---------------------------------------------------------------------------
// Mesh
// ---------------------------------------------------------------------------

inline CheckResult check_mesh_invariants(const mesh::UnstructuredMesh& m) {
  const auto inv = mesh::check_invariants(m);
  const auto q = mesh::quality_metrics(m);
  return {"mesh invariants", inv.ok(),
          std::to_string(m.triangles.size()) + " triangles, " + std::to_string(inv.inverted) + " inverted, " +
              std::to_string(inv.nonmanifold_edges) + " non-manifold edges, min angle " + detail::sci(q.min_angle_deg)};
}

struct RobustnessStats {
  int actions = 0;
  int accepted = 0;
  int rejected = 0;  // crossing or thickness, shape left unchanged
  std::size_t max_inverted = 0;
  double min_angle_deg = 180.0;
  double initial_min_angle_deg = 0.0;
};

/// Random walk of bounded actions on the environment geometry: each
/// feasible action is fitted and the reference mesh deformed onto it
/// (boundary update, interior displacement, smoothing sweeps, repair).
inline RobustnessStats mesh_random_walk(const rl::EnvConfig& cfg, int actions, std::uint64_t seed) {
  cfg.validate();
  const auto naca = geometry::naca4_init(cfg.naca_thickness, cfg.n_points);
  auto shape = geometry::resample_on_curves(naca, geometry::fit_surfaces(naca, cfg.degree, cfg.lambda_s));
  const auto c0 = geometry::fit_surfaces(shape, cfg.degree, cfg.lambda_s);
  const geometry::ThicknessConstraint thick{cfg.thickness_ranges, cfg.min_thickness, geometry::thickness_distribution(shape)};
  auto ref = mesh::generate_omesh(shape, cfg.radius, cfg.layers, cfg.omesh);
  mesh::update_boundary(ref, c0);
  const mesh::MeshDeformer deformer(ref, cfg.deform);
  mesh::UnstructuredMesh m;
  RobustnessStats st;
  st.max_inverted = deformer.deform(m, c0);
  st.initial_min_angle_deg = mesh::quality_metrics(m).min_angle_deg;
  st.min_angle_deg = st.initial_min_angle_deg;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const rl::ActionMapper mapper{cfg.bounds, cfg.x_min, cfg.x_max};
  for (int k = 0; k < actions; ++k) {
    ++st.actions;
    Eigen::VectorXd p(4);
    for (auto& x : p) x = u(rng);
    const auto moved = geometry::apply_action(shape, mapper.to_action(p), cfg.bounds);
    if (!moved.feasible || !geometry::check_thickness(moved.shape, thick).pass) {
      ++st.rejected;
      continue;
    }
    const auto curves = geometry::fit_surfaces(moved.shape, cfg.degree, cfg.lambda_s);
    const auto inverted = deformer.deform(m, curves);
    st.max_inverted = std::max(st.max_inverted, inverted);
    st.min_angle_deg = std::min(st.min_angle_deg, mesh::quality_metrics(m).min_angle_deg);
    shape = moved.shape;
    ++st.accepted;
  }
  return st;
}

inline CheckResult check_mesh_robustness(const rl::EnvConfig& cfg, int actions = 500, std::uint64_t seed = 8,
                                         double min_angle_deg = 10.0) {
  const auto st = mesh_random_walk(cfg, actions, seed);
  return {"mesh robustness under random actions", st.max_inverted == 0 && st.min_angle_deg >= min_angle_deg,
          std::to_string(st.actions) + " actions (" + std::to_string(st.accepted) + " applied, " +
              std::to_string(st.rejected) + " rejected), max inverted " + std::to_string(st.max_inverted) +
              ", min angle " + detail::sci(st.min_angle_deg) + " deg (initial " + detail::sci(st.initial_min_angle_deg) +
              ", floor " + detail::sci(min_angle_deg) + ")"};
}

/// Everything the `validate` subcommand runs; `on_check` sees each result
/// as soon as it is available.
inline std::vector<CheckResult> invariant_suite(const RunConfig& cfg,
                                                const std::function<void(const CheckResult&)>& on_check = {}) {
  std::vector<CheckResult> out;
  auto add = [&](CheckResult c) {
    if (on_check) on_check(c);
    out.push_back(std::move(c));
  };
  add(check_bezier_roundtrip());
  add(check_regularized_fit(cfg.env.lambda_s > 0.0 ? cfg.env.lambda_s : 1e-3));
  add(check_circle_curvature());
  add(check_reward_telescoping());
  add(check_exploration_bound());
  const auto small = small_check_mesh();
  add(check_jacobian_fd(small));
  add(check_gradient_fd(small));
  add(check_adjoint_identity(small));
  const auto naca = geometry::naca4_init(cfg.env.naca_thickness, cfg.env.n_points);
  add(check_mesh_invariants(mesh::generate_omesh(naca, cfg.env.radius, cfg.env.layers, cfg.env.omesh)));
  add(check_mesh_robustness(cfg.env, 500, cfg.seed));
  return out;
}

}  // namespace shapeopt::harness
