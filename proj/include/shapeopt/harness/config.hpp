/// @file config.hpp
/// @brief Run configuration: flat `section.key = value` text, every key
/// bound to one field of RunConfig. The echo lists every key, so a run can
/// be reproduced from its output directory alone.
#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "shapeopt/core.hpp"
#include "shapeopt/rl/td3.hpp"

namespace shapeopt::harness {

struct RunConfig {
  rl::EnvConfig env;
  rl::TrainConfig train;
  std::uint64_t seed = 1;

  /// Out-of-range values surface as ConfigError.
  void validate() const {
    try {
      env.validate();
      train.validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

inline long long parse_integer(const std::string& s) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw DomainError("not an integer: '" + s + "'");
  }
  if (pos != s.size()) throw DomainError("not an integer: '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw DomainError("not a boolean: '" + s + "'");
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

/// Every recognized key, in echo order, bound to the fields of `c`.
inline std::vector<ConfigKey> config_keys(RunConfig& c) {
  std::vector<ConfigKey> keys;
  auto real = [&](std::string name, double& f) {
    keys.push_back({std::move(name), [&f](const std::string& v) { f = parse_double(v); }, [&f] { return format_double(f); }});
  };
  auto integer = [&](std::string name, auto& f) {
    using T = std::remove_reference_t<decltype(f)>;
    keys.push_back({std::move(name),
                    [&f](const std::string& v) {
                      const auto x = detail::parse_integer(v);
                      if constexpr (std::is_unsigned_v<T>)
                        if (x < 0) throw DomainError("must be non-negative");
                      f = static_cast<T>(x);
                    },
                    [&f] { return std::to_string(f); }});
  };
  auto boolean = [&](std::string name, bool& f) {
    keys.push_back({std::move(name), [&f](const std::string& v) { f = detail::parse_bool(v); },
                    [&f] { return std::string(f ? "true" : "false"); }});
  };

  auto& e = c.env;
  auto& t = c.train;
  auto& oc = e.objective;

  keys.push_back({"run.objective", [&oc](const std::string& v) { oc.mode = rl::parse_objective_mode(v); },
                  [&oc] { return rl::to_string(oc.mode); }});
  keys.push_back({"run.seed", [&c](const std::string& v) {
                    const auto x = detail::parse_integer(v);
                    if (x < 0) throw DomainError("must be non-negative");
                    c.seed = static_cast<std::uint64_t>(x);
                  },
                  [&c] { return std::to_string(c.seed); }});

  real("flow.mach", oc.freestream.mach);
  real("flow.aoa_deg", oc.freestream.aoa_deg);
  real("flow.gamma", oc.freestream.gamma);

  real("geometry.naca_thickness", e.naca_thickness);
  integer("geometry.n_points", e.n_points);
  integer("geometry.degree", e.degree);
  real("geometry.lambda_s", e.lambda_s);
  real("geometry.min_thickness", e.min_thickness);
  keys.push_back({"geometry.thickness_ranges",
                  [&e](const std::string& v) {
                    e.thickness_ranges.clear();
                    if (v.empty()) return;
                    for (const auto& item : detail::split(v, ',')) {
                      const auto ab = detail::split(item, ':');
                      if (ab.size() != 2) throw DomainError("expected lo:hi pairs separated by ','");
                      e.thickness_ranges.push_back({parse_double(ab[0]), parse_double(ab[1])});
                    }
                  },
                  [&e] {
                    std::string s;
                    for (const auto& r : e.thickness_ranges)
                      s += (s.empty() ? "" : ",") + format_double(r.lo) + ":" + format_double(r.hi);
                    return s;
                  }});

  real("action.max_step", e.bounds.max_step);
  real("action.delta_min", e.bounds.delta_min);
  real("action.delta_max", e.bounds.delta_max);
  real("action.x_min", e.x_min);
  real("action.x_max", e.x_max);

  real("mesh.radius", e.radius);
  integer("mesh.layers", e.layers);
  real("mesh.first_layer_ratio", e.omesh.first_layer_ratio);
  real("mesh.blend_distance", e.omesh.blend_distance);
  integer("mesh.normal_passes", e.omesh.normal_passes);
  real("mesh.common_first_layer", e.omesh.common_first_layer);
  real("mesh.common_blend_power", e.omesh.common_blend_power);
  real("mesh.stiffening", e.deform.stiffening);
  integer("mesh.smoothing_sweeps", e.deform.smoothing_sweeps);
  real("mesh.repair_min_angle_deg", e.deform.repair.min_angle_deg);
  real("mesh.repair_max_angle_deg", e.deform.repair.max_angle_deg);
  integer("mesh.repair_smoothing_sweeps", e.deform.repair.smoothing_sweeps);

  auto& nw = oc.dwr.coarse_newton;
  real("solver.tol", nw.tol);
  integer("solver.max_iter", nw.max_iter);
  real("solver.cfl_initial", nw.cfl_initial);
  real("solver.cfl_max", nw.cfl_max);
  real("solver.min_damping", nw.min_damping);
  real("solver.cfl_min", nw.cfl_min);

  integer("dwr.refine_steps", oc.refine_steps);
  real("dwr.tol_k", oc.dwr.tol_k);
  integer("dwr.fine_newton_iters", oc.dwr.fine_newton_iters);
  real("dwr.adjoint_tol", oc.dwr.adjoint_tol);
  integer("dwr.max_cells", oc.dwr.max_cells);

  auto& sc = oc.surrogate;
  real("surrogate.d_min", sc.d_min);
  real("surrogate.d_start", sc.d_start);
  keys.push_back({"surrogate.target_actions",
                  [&sc](const std::string& v) {
                    sc.target_actions.clear();
                    for (const auto& item : detail::split(v, ',')) {
                      const auto f = detail::split(item, ':');
                      if (f.size() != 4) throw DomainError("expected x:y_upper:y_lower:delta entries separated by ','");
                      sc.target_actions.push_back({parse_double(f[0]), parse_double(f[1]), parse_double(f[2]), parse_double(f[3])});
                    }
                  },
                  [&sc] {
                    std::string s;
                    for (const auto& a : sc.target_actions)
                      s += (s.empty() ? "" : ",") + format_double(a.x_target) + ":" + format_double(a.y_upper_change) + ":" +
                           format_double(a.y_lower_change) + ":" + format_double(a.delta);
                    return s;
                  }});

  keys.push_back({"reward.mode", [&e](const std::string& v) { e.reward.mode = rl::parse_reward_mode(v); },
                  [&e] { return rl::to_string(e.reward.mode); }});
  real("reward.lambda0", e.reward.lambda0);
  real("reward.decay", e.reward.decay);
  real("reward.penalty", e.reward.penalty);

  integer("rl.episode_steps", e.episode_steps);
  real("rl.state_scale", e.state_scale);
  real("rl.gamma", t.td3.gamma);
  real("rl.tau", t.td3.tau);
  integer("rl.policy_delay", t.td3.policy_delay);
  real("rl.actor_lr", t.td3.actor_lr);
  real("rl.critic_lr", t.td3.critic_lr);
  real("rl.target_noise", t.td3.target_noise);
  real("rl.target_noise_clip", t.td3.target_noise_clip);
  real("rl.reward_scale", t.td3.reward_scale);
  integer("rl.hidden", t.td3.hidden);
  integer("rl.embed", t.td3.embed);
  integer("rl.warmup_episodes", t.warmup_episodes);
  integer("rl.epochs", t.epochs);
  integer("rl.steps_per_epoch", t.steps_per_epoch);
  integer("rl.batch_small", t.batch_small);
  integer("rl.batch_large", t.batch_large);
  integer("rl.batch_switch", t.batch_switch);
  integer("rl.buffer_capacity", t.buffer_capacity);
  integer("rl.updates_per_step", t.updates_per_step);
  real("rl.sample_recent", t.fractions.recent);
  real("rl.sample_best", t.fractions.best);
  real("rl.epsilon", t.epsilon);
  real("rl.noise_coeff", t.noise_coeff);
  real("rl.decay", t.decay);
  integer("rl.decay_every", t.decay_every);
  real("rl.ou_mu", t.ou.mu);
  real("rl.ou_theta", t.ou.theta);
  real("rl.ou_sigma", t.ou.sigma);
  real("rl.ou_dt", t.ou.dt);
  boolean("rl.retry", t.retry);
  real("rl.min_reward", t.min_reward);
  real("rl.min_cumreward", t.min_cumreward);
  real("rl.similar_quantile", t.similar_quantile);
  real("rl.similar_sigma", t.similar_sigma);
  return keys;
}

/// Sets one key; unknown keys and malformed values are ConfigError.
inline void set_key(RunConfig& c, const std::string& key, const std::string& value) {
  for (auto& k : config_keys(c)) {
    if (k.name != key) continue;
    try {
      k.set(value);
    } catch (const Error& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

/// Reads `key = value` lines over the defaults. '#' starts a comment; a key
/// may appear once. The result is validated.
inline RunConfig parse_config(std::istream& is, RunConfig c = {}) {
  std::map<std::string, int> seen;
  std::string line;
  int no = 0;
  while (std::getline(is, line)) {
    ++no;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected key = value");
    const auto key = detail::trim(std::string_view(line).substr(0, eq));
    const auto value = detail::trim(std::string_view(line).substr(eq + 1));
    if (auto [it, fresh] = seen.emplace(key, no); !fresh)
      throw ConfigError("config line " + std::to_string(no) + ": '" + key + "' already set on line " +
                        std::to_string(it->second));
    try {
      set_key(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(no) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(is);
}

inline void write_config(std::ostream& os, const RunConfig& c) {
  RunConfig copy = c;
  for (const auto& k : config_keys(copy)) os << k.name << " = " << k.get() << '\n';
}

inline void save_config(const std::string& path, const RunConfig& c) {
  std::ofstream os(path);
  write_config(os, c);
  if (!os) throw IoError("cannot write '" + path + "'");
}

}  // namespace shapeopt::harness
