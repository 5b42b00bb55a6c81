/// @file reward.hpp
/// @brief Step reward from consecutive objective values (lower is better).
#pragma once

#include <cmath>
#include <string>

#include "shapeopt/core.hpp"

namespace shapeopt::rl {

enum class RewardMode { simple, generalized };

inline RewardMode parse_reward_mode(const std::string& s) {
  if (s == "simple") return RewardMode::simple;
  if (s == "generalized") return RewardMode::generalized;
  throw ConfigError("unknown reward mode '" + s + "' (simple|generalized)");
}

inline std::string to_string(RewardMode m) { return m == RewardMode::simple ? "simple" : "generalized"; }

struct RewardConfig {
  RewardMode mode = RewardMode::generalized;
  double lambda0 = 0.1;   // initial exploration weight
  double decay = 0.9;     // per environment step
  double penalty = -0.005;  // infeasible or failed step

  void validate() const {
    if (!(lambda0 >= 0.0)) throw ConfigError("reward: lambda0 must be >= 0");
    if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("reward: decay must lie in (0,1)");
    if (!(penalty < 0.0)) throw ConfigError("reward: penalty must be negative");
  }
};

/// lambda0 * decay^t.
inline double exploration_weight(int t, const RewardConfig& c) { return c.lambda0 * std::pow(c.decay, t); }

/// Improvement d_prev - d_curr, plus the decaying bonus
/// exploration_weight(t) * (d0 - d_curr) in generalized mode.
inline double compute_reward(double d_prev, double d_curr, double d0, int t, const RewardConfig& c) {
  const double r = d_prev - d_curr;
  if (c.mode == RewardMode::simple) return r;
  return r + exploration_weight(t, c) * (d0 - d_curr);
}

/// Upper bound of the summed bonus when every d_t lies in [0, d0].
inline double exploration_bound(double d0, const RewardConfig& c) { return d0 * c.lambda0 / (1.0 - c.decay); }

}  // namespace shapeopt::rl
