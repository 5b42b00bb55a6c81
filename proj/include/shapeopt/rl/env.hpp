/// @file env.hpp
/// @brief Shape-deformation environment: action -> checked shape -> fitted
/// curves -> deformed mesh -> objective -> reward.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "shapeopt/dwr/dwr.hpp"
#include "shapeopt/geometry/shape.hpp"
#include "shapeopt/mesh/deform.hpp"
#include "shapeopt/mesh/omesh.hpp"
#include "shapeopt/rl/reward.hpp"

namespace shapeopt::rl {

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

enum class ObjectiveMode { drag, ratio, surrogate };

inline ObjectiveMode parse_objective_mode(const std::string& s) {
  if (s == "drag") return ObjectiveMode::drag;
  if (s == "lift_drag_ratio" || s == "ratio") return ObjectiveMode::ratio;
  if (s == "surrogate") return ObjectiveMode::surrogate;
  throw ConfigError("unknown objective '" + s + "' (drag|lift_drag_ratio|surrogate)");
}

inline std::string to_string(ObjectiveMode m) {
  switch (m) {
    case ObjectiveMode::drag: return "drag";
    case ObjectiveMode::ratio: return "lift_drag_ratio";
    case ObjectiveMode::surrogate: return "surrogate";
  }
  return "drag";
}

/// Non-physical stand-in for CFD: a quadratic bowl over the y coordinates of
/// the fitted control points. The bowl's center is the shape reached by
/// applying `target_actions` to the initial shape, where the value is d_min;
/// the initial shape sits at d_start.
struct SurrogateConfig {
  double d_min = 0.03;
  double d_start = 0.045;
  std::vector<geometry::DeformAction> target_actions{{0.35, 0.004, -0.002, 0.3}, {0.65, 0.003, 0.001, 0.25}};
};

struct ObjectiveConfig {
  ObjectiveMode mode = ObjectiveMode::drag;
  euler::FreeStream freestream{};
  int refine_steps = 2;  // 0 = plain solve on the environment mesh
  dwr::DwrOptions dwr{.tol_k = 0.5};
  SurrogateConfig surrogate;
};

struct ObjectiveValue {
  double d = 0.0;  // lower is better
  double cd = std::nan("");
  double cl = std::nan("");
  std::size_t cells = 0;
  int newton_iterations = 0;
};

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

struct EnvConfig {
  double naca_thickness = 0.12;  // initial symmetric section
  int n_points = 132;
  int degree = 16;
  double lambda_s = 1e-3;
  geometry::ActionBounds bounds{};
  double x_min = 0.02;  // x_target range
  double x_max = 0.98;
  std::vector<geometry::ThicknessRange> thickness_ranges{{0.0, 0.1}, {0.7, 1.0}};
  double min_thickness = 0.01;
  double radius = 35.0;
  int layers = 48;
  mesh::OMeshOptions omesh{};
  mesh::DeformOptions deform{};
  ObjectiveConfig objective{};
  RewardConfig reward{};
  int episode_steps = 64;
  double state_scale = 0.05;  // control-point offsets are divided by this

  void validate() const {
    if (!(naca_thickness > 0.0 && naca_thickness <= 0.3)) throw ConfigError("geometry: naca_thickness must lie in (0, 0.3]");
    if (n_points < 8 || n_points % 2 != 0) throw ConfigError("geometry: n_points must be even and >= 8");
    if (degree < 2 || degree + 1 > n_points / 2) throw ConfigError("geometry: degree must lie in [2, n_points/2 - 1]");
    if (!(lambda_s >= 0.0)) throw ConfigError("geometry: lambda_s must be >= 0");
    if (!(bounds.max_step > 0.0)) throw ConfigError("action: max_step must be > 0");
    if (!(bounds.delta_min > 0.0 && bounds.delta_min <= bounds.delta_max)) throw ConfigError("action: bad delta range");
    if (!(x_min > 0.0 && x_min < x_max && x_max < 1.0)) throw ConfigError("action: x range must lie inside (0,1)");
    if (!(radius > 0.0) || layers < 3) throw ConfigError("mesh: radius > 0 and layers >= 3 required");
    if (episode_steps < 1) throw ConfigError("rl: episode_steps must be >= 1");
    if (!(state_scale > 0.0)) throw ConfigError("rl: state_scale must be > 0");
    if (objective.refine_steps < 0) throw ConfigError("dwr: refine_steps must be >= 0");
    geometry::ThicknessConstraint{thickness_ranges, min_thickness, {}}.validate();
    euler::validate(objective.freestream);
    reward.validate();
  }
};

/// Maps normalized parameters p in [-1,1]^4 to an action and back:
/// x_target, upper change, lower change, Gaussian width.
struct ActionMapper {
  geometry::ActionBounds bounds{};
  double x_min = 0.02;
  double x_max = 0.98;

  static constexpr Eigen::Index kParams = 4;

  geometry::DeformAction to_action(const Eigen::VectorXd& p) const {
    if (p.size() != kParams) throw DomainError("action parameters: expected 4 values");
    auto c = [](double v) { return std::clamp(v, -1.0, 1.0); };
    return {x_min + (x_max - x_min) * 0.5 * (c(p[0]) + 1.0), bounds.max_step * c(p[1]), bounds.max_step * c(p[2]),
            bounds.delta_min + (bounds.delta_max - bounds.delta_min) * 0.5 * (c(p[3]) + 1.0)};
  }

  Eigen::VectorXd to_params(const geometry::DeformAction& a) const {
    Eigen::VectorXd p(kParams);
    p[0] = 2.0 * (a.x_target - x_min) / (x_max - x_min) - 1.0;
    p[1] = a.y_upper_change / bounds.max_step;
    p[2] = a.y_lower_change / bounds.max_step;
    const double span = bounds.delta_max - bounds.delta_min;
    p[3] = span > 0.0 ? 2.0 * (a.delta - bounds.delta_min) / span - 1.0 : 0.0;
    return p;
  }
};

/// `shape` holds the design points that actions move; `curves` is their
/// regularized fit, which defines the mesh boundary and the objective.
/// Fitting never feeds back into `shape`, so a zero action is a no-op.
struct EnvState {
  geometry::AirfoilShape shape;
  geometry::SurfaceCurves curves;
  mesh::UnstructuredMesh mesh;
  ObjectiveValue value;
  int t = 0;
};

struct StepResult {
  double reward = 0.0;
  double d = 0.0;  // objective after the step (unchanged when rejected)
  bool done = false;
  bool infeasible = false;     // geometry or mesh rejected the action
  bool solver_failed = false;  // CFD did not converge; state rolled back
  std::string reason;
};

class Environment {
 public:
  explicit Environment(EnvConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto naca = geometry::naca4_init(cfg_.naca_thickness, cfg_.n_points);
    initial_.shape = geometry::resample_on_curves(naca, geometry::fit_surfaces(naca, cfg_.degree, cfg_.lambda_s));
    const auto c0 = geometry::fit_surfaces(initial_.shape, cfg_.degree, cfg_.lambda_s);
    initial_.curves = c0;
    thickness_ = {cfg_.thickness_ranges, cfg_.min_thickness, geometry::thickness_distribution(initial_.shape)};
    auto ref = mesh::generate_omesh(initial_.shape, cfg_.radius, cfg_.layers, cfg_.omesh);
    mesh::update_boundary(ref, c0);
    deformer_.emplace(std::move(ref), cfg_.deform);
    if (deformer_->deform(initial_.mesh, c0) != 0) throw GeometryError("environment: initial mesh is tangled");
    cp0_ = control_points(c0);
    mapper_ = {cfg_.bounds, cfg_.x_min, cfg_.x_max};
    if (cfg_.objective.mode == ObjectiveMode::surrogate) build_surrogate();
  }

  /// Initial shape and mesh, objective evaluated. A failing baseline solve
  /// is a configuration problem.
  const EnvState& reset() {
    if (!d0_) {
      try {
        initial_.value = evaluate(initial_.mesh, initial_.curves);
      } catch (const SolverError& e) {
        throw ConfigError(std::string("baseline objective failed: ") + e.what());
      } catch (const StateError& e) {
        throw ConfigError(std::string("baseline objective failed: ") + e.what());
      }
      d0_ = initial_.value.d;
    }
    state_ = initial_;
    return state_;
  }

  StepResult step(const geometry::DeformAction& action) {
    const int t_next = state_.t + 1;
    StepResult r;
    r.done = t_next >= cfg_.episode_steps;
    auto reject = [&](const std::string& why) {
      state_.t = t_next;
      r.reward = cfg_.reward.penalty;
      r.d = state_.value.d;
      r.infeasible = true;
      r.reason = why;
      return r;
    };
    const auto moved = geometry::apply_action(state_.shape, action, cfg_.bounds);
    if (!moved.feasible) return reject("surfaces cross");
    if (!geometry::check_thickness(moved.shape, thickness_).pass) return reject("thickness");
    EnvState next;
    try {
      next.curves = geometry::fit_surfaces(moved.shape, cfg_.degree, cfg_.lambda_s);
      next.shape = moved.shape;
      if (!geometry::surfaces_ordered(geometry::resample_on_curves(moved.shape, next.curves)))
        return reject("surfaces cross after fit");
    } catch (const GeometryError& e) {
      return reject(e.what());
    } catch (const FitError& e) {
      return reject(e.what());
    }
    if (deformer_->deform(next.mesh, next.curves) != 0) return reject("mesh tangled");
    try {
      next.value = evaluate(next.mesh, next.curves);
    } catch (const SolverError& e) {
      r = reject(e.what());
      r.infeasible = false;
      r.solver_failed = true;
      return r;
    } catch (const StateError& e) {
      r = reject(e.what());
      r.infeasible = false;
      r.solver_failed = true;
      return r;
    }
    next.t = t_next;
    r.reward = compute_reward(state_.value.d, next.value.d, d0(), t_next, cfg_.reward);
    r.d = next.value.d;
    state_ = std::move(next);
    return r;
  }

  const EnvState& state() const noexcept { return state_; }
  /// Baseline shape, curves and mesh; `value` is filled in by reset().
  const EnvState& initial() const noexcept { return initial_; }
  void restore(const EnvState& s) { state_ = s; }

  double d0() const {
    if (!d0_) throw DomainError("environment: reset() has not been called");
    return *d0_;
  }

  /// Network input: control-point offsets from the initial fit, scaled.
  Eigen::VectorXd encode() const { return encode(state_); }
  Eigen::VectorXd encode(const EnvState& s) const { return (control_points(s.curves) - cp0_) / cfg_.state_scale; }
  Eigen::Index state_dim() const { return cp0_.size(); }

  const ActionMapper& mapper() const noexcept { return mapper_; }
  const EnvConfig& config() const noexcept { return cfg_; }
  const geometry::ThicknessConstraint& thickness() const noexcept { return thickness_; }
  const mesh::MeshDeformer& deformer() const { return *deformer_; }

  /// Fits and meshes an arbitrary design shape and evaluates it, t = 0.
  EnvState from_shape(const geometry::AirfoilShape& shape) const {
    geometry::validate_shape(shape);
    if (shape.upper.size() != initial_.shape.upper.size())
      throw GeometryError("shape has " + std::to_string(shape.upper.size()) + " samples per surface, environment uses " +
                          std::to_string(initial_.shape.upper.size()));
    EnvState s;
    s.shape = shape;
    s.curves = geometry::fit_surfaces(shape, cfg_.degree, cfg_.lambda_s);
    if (deformer_->deform(s.mesh, s.curves) != 0) throw GeometryError("shape: deformed mesh is tangled");
    s.value = evaluate(s.mesh, s.curves);
    return s;
  }

  /// Objective of an arbitrary mesh/curves pair.
  ObjectiveValue evaluate(const mesh::UnstructuredMesh& m, const geometry::SurfaceCurves& curves) const {
    ObjectiveValue v;
    const auto& oc = cfg_.objective;
    if (oc.mode == ObjectiveMode::surrogate) {
      v.d = surrogate_value(curves);
      return v;
    }
    const auto functional = oc.mode == ObjectiveMode::drag ? dwr::Functional::drag : dwr::Functional::ratio;
    euler::Forces f;
    if (oc.refine_steps == 0) {
      const euler::FvMesh fv(m);
      const auto sol = euler::newton_solve(fv, oc.freestream, oc.dwr.coarse_newton);
      f = euler::compute_forces(fv, sol.field, oc.freestream);
      v.cells = fv.num_cells();
      v.newton_iterations = sol.iterations;
    } else {
      const auto res = dwr::dwr_adapt_loop(m, oc.freestream, functional, oc.refine_steps, oc.dwr);
      const euler::FvMesh fv(res.mesh);
      f = euler::compute_forces(fv, res.field, oc.freestream);
      v.cells = fv.num_cells();
      for (const auto& h : res.history) v.newton_iterations += h.newton_iterations;
    }
    v.cd = f.cd;
    v.cl = f.cl;
    v.d = oc.mode == ObjectiveMode::drag ? f.cd : -euler::lift_drag_ratio(f);
    return v;
  }

  /// Analytic minimum of the surrogate (d_min); NaN for CFD objectives.
  double surrogate_minimum() const {
    return cfg_.objective.mode == ObjectiveMode::surrogate ? cfg_.objective.surrogate.d_min : std::nan("");
  }
  const Eigen::VectorXd& surrogate_target() const noexcept { return target_y_; }

  static Eigen::VectorXd control_points(const geometry::SurfaceCurves& c) {
    const auto n = static_cast<Eigen::Index>(c.upper.control_points.size());
    Eigen::VectorXd v(4 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(i);
      v[2 * i] = c.upper.control_points[k].x;
      v[2 * i + 1] = c.upper.control_points[k].y;
      v[2 * n + 2 * i] = c.lower.control_points[k].x;
      v[2 * n + 2 * i + 1] = c.lower.control_points[k].y;
    }
    return v;
  }

 private:
  static Eigen::VectorXd control_y(const geometry::SurfaceCurves& c) {
    const Eigen::VectorXd cp = control_points(c);
    Eigen::VectorXd y(cp.size() / 2);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = cp[2 * i + 1];
    return y;
  }

  void build_surrogate() {
    const auto& sc = cfg_.objective.surrogate;
    if (!(sc.d_start > sc.d_min)) throw ConfigError("surrogate: d_start must exceed d_min");
    geometry::AirfoilShape s = initial_.shape;
    geometry::SurfaceCurves c = initial_.curves;
    for (const auto& a : sc.target_actions) {
      const auto moved = geometry::apply_action(s, a, cfg_.bounds);
      if (!moved.feasible) throw ConfigError("surrogate: target action makes surfaces cross");
      s = moved.shape;
      c = geometry::fit_surfaces(s, cfg_.degree, cfg_.lambda_s);
    }
    target_y_ = control_y(c);
    const double start = (control_y(initial_.curves) - target_y_).squaredNorm();
    if (!(start > 0.0)) throw ConfigError("surrogate: target equals the initial shape");
    surrogate_scale_ = (sc.d_start - sc.d_min) / start;
  }

  double surrogate_value(const geometry::SurfaceCurves& c) const {
    return cfg_.objective.surrogate.d_min + surrogate_scale_ * (control_y(c) - target_y_).squaredNorm();
  }

  EnvConfig cfg_;
  EnvState initial_;
  EnvState state_;
  geometry::ThicknessConstraint thickness_;
  std::optional<mesh::MeshDeformer> deformer_;
  Eigen::VectorXd cp0_;
  ActionMapper mapper_;
  std::optional<double> d0_;
  Eigen::VectorXd target_y_;
  double surrogate_scale_ = 0.0;
};

}  // namespace shapeopt::rl
