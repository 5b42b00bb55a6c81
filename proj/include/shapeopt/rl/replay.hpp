/// @file replay.hpp
/// @brief Bounded transition store sampled from recent, best-reward and
/// uniformly random pools.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "shapeopt/core.hpp"

namespace shapeopt::rl {

struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd types;   // action-type probabilities (one-hot for executed random actions)
  Eigen::VectorXd params;  // normalized action parameters in [-1, 1]
  double reward = 0.0;
  Eigen::VectorXd next_state;
  bool done = false;

  bool finite() const {
    return state.allFinite() && types.allFinite() && params.allFinite() && std::isfinite(reward) && next_state.allFinite();
  }
};

struct SampleFractions {
  double recent = 0.25;
  double best = 0.25;  // the rest is uniform

  void validate() const {
    if (!(recent >= 0.0 && best >= 0.0 && recent + best <= 1.0)) throw ConfigError("replay: pool fractions must be >= 0 and sum to <= 1");
  }
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100000) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay: capacity must be positive");
  }

  /// Appends; drops the oldest entry when full.
  void push(Transition t) {
    if (!t.finite()) throw DomainError("replay: non-finite transition");
    bool rescan = false;
    if (data_.size() == capacity_) {
      data_.pop_front();
      if (best_ == 0)
        rescan = true;
      else
        --best_;
    }
    data_.push_back(std::move(t));
    if (rescan)
      refresh_best();
    else if (data_.back().reward > data_[best_].reward)
      best_ = data_.size() - 1;
  }

  std::size_t size() const noexcept { return data_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const Transition& operator[](std::size_t i) const { return data_.at(i); }
  /// Position of the highest-reward entry (earliest on ties).
  std::size_t best_index() const {
    if (data_.empty()) throw DomainError("replay: empty buffer");
    return best_;
  }

  /// Batch of distinct entries: the most recent ones, then the highest
  /// rewards not yet taken (at least one slot), then uniform picks from the
  /// remainder. Returned as buffer positions.
  std::vector<std::size_t> sample_indices(std::size_t batch, std::mt19937_64& rng, const SampleFractions& f = {}) const {
    if (batch == 0) throw DomainError("replay: batch size must be positive");
    if (data_.size() < batch) throw DomainError("replay: " + std::to_string(data_.size()) + " transitions, batch needs " + std::to_string(batch));
    const std::size_t n = data_.size();
    const auto n_recent = std::min(batch, static_cast<std::size_t>(std::lround(f.recent * static_cast<double>(batch))));
    auto n_best = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(f.best * static_cast<double>(batch))));
    n_best = std::min(n_best, batch - n_recent);
    std::vector<char> taken(n, 0);
    std::vector<std::size_t> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < n_recent; ++i) {
      out.push_back(n - 1 - i);
      taken[n - 1 - i] = 1;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return data_[a].reward > data_[b].reward; });
    for (std::size_t i = 0, added = 0; i < n && added < n_best; ++i) {
      if (taken[order[i]]) continue;
      out.push_back(order[i]);
      taken[order[i]] = 1;
      ++added;
    }
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < n; ++i)
      if (!taken[i]) rest.push_back(i);
    // partial Fisher-Yates over the untaken entries
    for (std::size_t i = 0; out.size() < batch; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, rest.size() - 1);
      std::swap(rest[i], rest[pick(rng)]);
      out.push_back(rest[i]);
    }
    return out;
  }

  std::vector<const Transition*> sample(std::size_t batch, std::mt19937_64& rng, const SampleFractions& f = {}) const {
    std::vector<const Transition*> out;
    for (auto i : sample_indices(batch, rng, f)) out.push_back(&data_[i]);
    return out;
  }

  /// q-quantile of the stored rewards.
  double reward_quantile(double q) const {
    if (data_.empty()) throw DomainError("replay: empty buffer");
    std::vector<double> r;
    r.reserve(data_.size());
    for (const auto& t : data_) r.push_back(t.reward);
    const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(r.size() - 1)));
    std::nth_element(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(k), r.end());
    return r[k];
  }

  /// CSV snapshot: reward,done then the four vectors as ';'-separated lists.
  void write_csv(std::ostream& os) const {
    os << "reward,done,state,types,params,next_state\n";
    auto vec = [&](const Eigen::VectorXd& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ";" : "") << format_double(v[i]);
    };
    for (const auto& t : data_) {
      os << format_double(t.reward) << ',' << (t.done ? 1 : 0) << ',';
      vec(t.state);
      os << ',';
      vec(t.types);
      os << ',';
      vec(t.params);
      os << ',';
      vec(t.next_state);
      os << '\n';
    }
  }

 private:
  void refresh_best() {
    best_ = 0;
    for (std::size_t i = 1; i < data_.size(); ++i)
      if (data_[i].reward > data_[best_].reward) best_ = i;
  }

  std::size_t capacity_;
  std::deque<Transition> data_;
  std::size_t best_ = 0;
};

}  // namespace shapeopt::rl
