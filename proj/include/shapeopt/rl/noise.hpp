/// @file noise.hpp
/// @brief Ornstein-Uhlenbeck exploration noise.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "shapeopt/core.hpp"

namespace shapeopt::rl {

struct OuConfig {
  double mu = 0.0;
  double theta = 0.15;
  double sigma = 0.2;
  double dt = 1.0;

  void validate() const {
    if (!(std::isfinite(mu) && std::isfinite(theta) && std::isfinite(dt) && dt > 0.0)) throw ConfigError("ou: bad parameters");
    if (!(sigma >= 0.0)) throw ConfigError("ou: sigma must be >= 0");
  }
};

/// x' = x + theta (mu - x) dt + sigma sqrt(dt) N(0,1).
inline double ou_noise_step(double x, const OuConfig& c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  return x + c.theta * (c.mu - x) * c.dt + c.sigma * std::sqrt(c.dt) * nd(rng);
}

/// Independent OU processes, one per action parameter.
class OuProcess {
 public:
  OuProcess(Eigen::Index dim, OuConfig c) : c_(c), x_(Eigen::VectorXd::Constant(dim, c.mu)) { c.validate(); }

  const Eigen::VectorXd& step(std::mt19937_64& rng) {
    for (Eigen::Index i = 0; i < x_.size(); ++i) x_[i] = ou_noise_step(x_[i], c_, rng);
    return x_;
  }
  void reset() { x_.setConstant(c_.mu); }
  const Eigen::VectorXd& value() const { return x_; }

 private:
  OuConfig c_;
  Eigen::VectorXd x_;
};

}  // namespace shapeopt::rl
