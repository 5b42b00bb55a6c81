/// @file td3.hpp
/// @brief Twin-critic delayed actor-critic agent and the training loop that
/// drives the shape environment.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "shapeopt/nn/networks.hpp"
#include "shapeopt/rl/env.hpp"
#include "shapeopt/rl/noise.hpp"
#include "shapeopt/rl/replay.hpp"

namespace shapeopt::rl {

struct Td3Config {
  double gamma = 0.99;
  double tau = 0.995;  // weight kept on the target in each soft update
  int policy_delay = 2;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double target_noise = 0.2;  // smoothing noise on target-policy parameters
  double target_noise_clip = 0.5;
  /// Critic targets use reward_scale * r; 0 means 1/|D0| (set by Trainer).
  double reward_scale = 0.0;
  Eigen::Index hidden = 256;
  Eigen::Index embed = 128;

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("td3: gamma must lie in [0,1]");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("td3: tau must lie in [0,1]");
    if (policy_delay < 1) throw ConfigError("td3: policy_delay must be >= 1");
    if (!(actor_lr > 0.0 && critic_lr > 0.0)) throw ConfigError("td3: learning rates must be > 0");
    if (!(target_noise >= 0.0 && target_noise_clip >= 0.0)) throw ConfigError("td3: target noise must be >= 0");
    if (hidden < 1 || embed < 1) throw ConfigError("td3: layer widths must be >= 1");
    if (!(reward_scale >= 0.0 && std::isfinite(reward_scale))) throw ConfigError("td3: reward_scale must be >= 0");
  }
};

/// Online and target networks with their optimizers. Parameters are shared
/// handles, so the agent is move-only.
class Agent {
 public:
  Agent(Eigen::Index state_dim, Eigen::Index n_params, Eigen::Index n_types, const Td3Config& c, std::mt19937_64& rng)
      : cfg_((c.validate(), c)),
        actor_({state_dim, n_params, n_types, c.hidden}, rng),
        critic1_({state_dim, n_params, n_types, c.embed, c.hidden}, rng),
        critic2_({state_dim, n_params, n_types, c.embed, c.hidden}, rng),
        actor_target_(actor_.clone()),
        critic1_target_(critic1_.clone()),
        critic2_target_(critic2_.clone()),
        actor_opt_(actor_.params(), {.lr = c.actor_lr}),
        critic1_opt_(critic1_.params("critic1"), {.lr = c.critic_lr}),
        critic2_opt_(critic2_.params("critic2"), {.lr = c.critic_lr}) {}
  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;
  Agent(Agent&&) = default;
  Agent& operator=(Agent&&) = default;

  const Td3Config& config() const noexcept { return cfg_; }
  nn::Actor& actor() { return actor_; }
  nn::Critic& critic1() { return critic1_; }
  nn::Critic& critic2() { return critic2_; }
  nn::Actor& actor_target() { return actor_target_; }
  nn::Critic& critic1_target() { return critic1_target_; }
  nn::Critic& critic2_target() { return critic2_target_; }
  nn::Adam& actor_optimizer() { return actor_opt_; }
  nn::Adam& critic1_optimizer() { return critic1_opt_; }
  nn::Adam& critic2_optimizer() { return critic2_opt_; }
  long updates() const noexcept { return updates_; }
  long& updates_counter() noexcept { return updates_; }

  Eigen::Index state_dim() const { return actor_.config().state_dim; }
  Eigen::Index n_params() const { return actor_.config().n_params; }
  Eigen::Index n_types() const { return actor_.config().n_types; }

  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);

 private:
  Td3Config cfg_;
  nn::Actor actor_;
  nn::Critic critic1_, critic2_;
  nn::Actor actor_target_;
  nn::Critic critic1_target_, critic2_target_;
  nn::Adam actor_opt_, critic1_opt_, critic2_opt_;
  long updates_ = 0;
};

// ---------------------------------------------------------------------------
// Update
// ---------------------------------------------------------------------------

struct Losses {
  double critic1 = std::nan("");
  double critic2 = std::nan("");
  double actor = std::nan("");  // NaN on steps without a policy update
};

struct Batch {
  nn::Matrix state, types, params, next_state;
  Eigen::VectorXd reward, not_done;
};

inline Batch make_batch(const std::vector<const Transition*>& ts) {
  if (ts.empty()) throw DomainError("td3: empty batch");
  const auto b = static_cast<Eigen::Index>(ts.size());
  Batch out;
  out.state.resize(b, ts[0]->state.size());
  out.next_state.resize(b, ts[0]->next_state.size());
  out.types.resize(b, ts[0]->types.size());
  out.params.resize(b, ts[0]->params.size());
  out.reward.resize(b);
  out.not_done.resize(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& t = *ts[static_cast<std::size_t>(i)];
    if (t.state.size() != out.state.cols() || t.next_state.size() != out.next_state.cols() ||
        t.types.size() != out.types.cols() || t.params.size() != out.params.cols())
      throw StructureError("td3: transitions in a batch have different widths");
    out.state.row(i) = t.state.transpose();
    out.next_state.row(i) = t.next_state.transpose();
    out.types.row(i) = t.types.transpose();
    out.params.row(i) = t.params.transpose();
    out.reward[i] = t.reward;
    out.not_done[i] = t.done ? 0.0 : 1.0;
  }
  return out;
}

/// s r + gamma * min(Q1', Q2')(s', smoothed target action) with s the reward
/// scale (1 when unset), no bootstrap on terminal transitions.
inline Eigen::VectorXd critic_targets(Agent& agent, const Batch& b, std::mt19937_64& rng) {
  const auto& c = agent.config();
  const auto next = nn::Tensor::constant(b.next_state);
  const auto a = agent.actor_target().forward(next);
  nn::Matrix p = a.params.value();
  if (c.target_noise > 0.0) {
    std::normal_distribution<double> nd(0.0, c.target_noise);
    for (Eigen::Index i = 0; i < p.size(); ++i)
      p.data()[i] += std::clamp(nd(rng), -c.target_noise_clip, c.target_noise_clip);
  }
  p = p.cwiseMax(-1.0).cwiseMin(1.0);
  const auto types = nn::Tensor::constant(a.types.value());
  const auto pt = nn::Tensor::constant(p);
  const nn::Matrix q1 = agent.critic1_target().forward(next, types, pt).value();
  const nn::Matrix q2 = agent.critic2_target().forward(next, types, pt).value();
  const Eigen::VectorXd qmin = q1.col(0).cwiseMin(q2.col(0));
  const double scale = c.reward_scale > 0.0 ? c.reward_scale : 1.0;
  return scale * b.reward + c.gamma * b.not_done.cwiseProduct(qmin);
}

/// One critic regression step on both critics; every policy_delay calls an
/// actor step on -Q1(s, actor(s)) followed by soft target updates.
inline Losses td3_update(Agent& agent, const std::vector<const Transition*>& ts, std::mt19937_64& rng) {
  const Batch b = make_batch(ts);
  const Eigen::VectorXd y = critic_targets(agent, b, rng);
  const nn::Matrix target = y;
  const auto s = nn::Tensor::constant(b.state);
  const auto ty = nn::Tensor::constant(b.types);
  const auto pa = nn::Tensor::constant(b.params);
  Losses out;
  auto fit = [&](nn::Critic& critic, nn::Adam& opt) {
    opt.zero_grad();
    const auto loss = nn::mse(critic.forward(s, ty, pa), target);
    loss.backward();
    opt.step();
    return loss.item();
  };
  out.critic1 = fit(agent.critic1(), agent.critic1_optimizer());
  out.critic2 = fit(agent.critic2(), agent.critic2_optimizer());

  if (++agent.updates_counter() % agent.config().policy_delay == 0) {
    agent.actor_optimizer().zero_grad();
    const auto a = agent.actor().forward(s);
    const auto loss = nn::scale(nn::mean(agent.critic1().forward(s, a.types, a.params)), -1.0);
    loss.backward();
    agent.actor_optimizer().step();
    agent.critic1_optimizer().zero_grad();
    out.actor = loss.item();
    const double tau = agent.config().tau;
    nn::soft_update(agent.actor_target().params(), agent.actor().params(), tau);
    nn::soft_update(agent.critic1_target().params(), agent.critic1().params(), tau);
    nn::soft_update(agent.critic2_target().params(), agent.critic2().params(), tau);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Action selection
// ---------------------------------------------------------------------------

struct ActionChoice {
  Eigen::VectorXd params;  // normalized, in [-1, 1]
  Eigen::VectorXd types;   // probabilities
  bool random = false;
};

/// Uniform parameters and a one-hot type.
inline ActionChoice random_action(Eigen::Index n_params, Eigen::Index n_types, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ActionChoice a;
  a.random = true;
  a.params.resize(n_params);
  for (Eigen::Index i = 0; i < n_params; ++i) a.params[i] = u(rng);
  a.types = Eigen::VectorXd::Zero(n_types);
  std::uniform_int_distribution<Eigen::Index> pick(0, n_types - 1);
  a.types[pick(rng)] = 1.0;
  return a;
}

/// With probability epsilon a uniform random action; otherwise the actor's
/// parameters plus noise_coeff times the OU sample, clipped to [-1, 1].
inline ActionChoice select_action(nn::Actor& actor, const Eigen::VectorXd& state, double epsilon, double noise_coeff,
                                  OuProcess& ou, std::mt19937_64& rng) {
  const auto& c = actor.config();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (epsilon > 0.0 && u(rng) < epsilon) return random_action(c.n_params, c.n_types, rng);
  const auto out = actor.forward(nn::Tensor::constant(nn::Matrix(state.transpose())));
  ActionChoice a;
  a.params = out.params.value().row(0).transpose();
  a.types = out.types.value().row(0).transpose();
  if (noise_coeff != 0.0) a.params += noise_coeff * ou.step(rng);
  a.params = a.params.cwiseMax(-1.0).cwiseMin(1.0);
  return a;
}

/// Same x_target and width, displacements negated.
inline Eigen::VectorXd opposite_params(const Eigen::VectorXd& p) {
  Eigen::VectorXd q = p;
  q[1] = -q[1];
  q[2] = -q[2];
  return q;
}

struct RetryOutcome {
  Transition first;
  Transition second;
  StepResult first_result;
  StepResult second_result;
  bool kept_second = false;
};

/// `first` was already executed from `before`. Reloads `before`, executes the
/// opposite displacement and leaves the environment in whichever resulting
/// state earned the higher reward (the first on ties).
inline RetryOutcome opposite_retry(Environment& env, const EnvState& before, const ActionChoice& choice,
                                   const StepResult& first_result) {
  RetryOutcome out;
  const Eigen::VectorXd s0 = env.encode(before);
  out.first = {s0, choice.types, choice.params, first_result.reward, env.encode(), first_result.done};
  out.first_result = first_result;
  EnvState after_first = env.state();
  env.restore(before);
  const Eigen::VectorXd q = opposite_params(choice.params);
  out.second_result = env.step(env.mapper().to_action(q));
  out.second = {s0, choice.types, q, out.second_result.reward, env.encode(), out.second_result.done};
  out.kept_second = out.second_result.reward > first_result.reward;
  if (!out.kept_second) env.restore(after_first);
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  Td3Config td3{};
  int warmup_episodes = 4;  // random-action episodes of env episode_steps each
  int epochs = 75;
  int steps_per_epoch = 8;
  std::size_t batch_small = 64;
  std::size_t batch_large = 256;
  std::size_t batch_switch = 1024;  // buffer size at which the large batch starts
  std::size_t buffer_capacity = 100000;
  int updates_per_step = 1;
  SampleFractions fractions{};
  double epsilon = 0.9;
  double noise_coeff = 1.0;
  double decay = 0.85;
  int decay_every = 3;  // epochs
  OuConfig ou{};
  bool retry = true;
  double min_reward = 0.0;       // rewards below this trigger the opposite retry
  double min_cumreward = -0.05;  // early episode reset below this
  double similar_quantile = 0.9;
  double similar_sigma = 0.1;  // on normalized displacements

  void validate() const {
    td3.validate();
    fractions.validate();
    ou.validate();
    if (warmup_episodes < 0 || epochs < 0 || steps_per_epoch < 1) throw ConfigError("rl: bad schedule lengths");
    if (updates_per_step < 1) throw ConfigError("rl: updates_per_step must be >= 1");
    if (batch_small < 1 || batch_large < batch_small) throw ConfigError("rl: need 1 <= batch_small <= batch_large");
    if (buffer_capacity < batch_large) throw ConfigError("rl: buffer capacity below the large batch size");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("rl: epsilon must lie in [0,1]");
    if (!(noise_coeff >= 0.0)) throw ConfigError("rl: noise_coeff must be >= 0");
    if (!(decay > 0.0 && decay <= 1.0) || decay_every < 1) throw ConfigError("rl: bad decay schedule");
    if (!(similar_quantile >= 0.0 && similar_quantile <= 1.0) || !(similar_sigma >= 0.0))
      throw ConfigError("rl: bad similar-action settings");
  }

  /// Schedule value in a given (1-based) training epoch.
  double decayed(double base, int epoch) const { return base * std::pow(decay, epoch / decay_every); }
};

struct TraceRow {
  int episode = 0;
  int epoch = 0;  // 0 during warmup
  long step = 0;
  int t = 0;
  double d = 0.0;
  double reward = 0.0;
  double cumreward = 0.0;
  double noise_coeff = 0.0;
  double epsilon = 0.0;
  Losses losses{};
  bool retry = false;
  bool infeasible = false;
  double state_d = 0.0;  // environment objective once the step (and any retry) is resolved; not in trace.csv
};

inline void write_trace(std::ostream& os, const std::vector<TraceRow>& rows) {
  os << "episode,epoch,step,t,D,reward,cumreward,noise_coeff,epsilon,critic1_loss,critic2_loss,actor_loss,retry_flag,"
        "infeasible_flag\n";
  auto opt = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
  for (const auto& r : rows)
    os << r.episode << ',' << r.epoch << ',' << r.step << ',' << r.t << ',' << format_double(r.d) << ','
       << format_double(r.reward) << ',' << format_double(r.cumreward) << ',' << format_double(r.noise_coeff) << ','
       << format_double(r.epsilon) << ',' << opt(r.losses.critic1) << ',' << opt(r.losses.critic2) << ','
       << opt(r.losses.actor) << ',' << (r.retry ? 1 : 0) << ',' << (r.infeasible ? 1 : 0) << '\n';
}

struct TrainResult {
  double d0 = 0.0;
  double best_d = 0.0;
  EnvState best;
  EnvState last;
  std::vector<TraceRow> trace;
  long updates = 0;
};

class Trainer {
 public:
  Trainer(Environment& env, TrainConfig cfg, std::uint64_t seed)
      : env_(env),
        cfg_(std::move(cfg)),
        rng_(seed),
        agent_(make_agent()),
        buffer_(cfg_.buffer_capacity),
        ou_(ActionMapper::kParams, cfg_.ou) {}

  Agent& agent() { return agent_; }
  ReplayBuffer& buffer() { return buffer_; }
  const TrainConfig& config() const { return cfg_; }

  /// Warmup, then the training epochs. `on_row` sees every trace row as it
  /// is produced.
  TrainResult run(const std::function<void(const TraceRow&)>& on_row = {}) {
    on_row_ = on_row;
    result_ = {};
    env_.reset();
    result_.d0 = env_.d0();
    result_.best_d = result_.d0;
    result_.best = env_.state();
    episode_ = 0;
    step_ = 0;
    const int warm_steps = cfg_.warmup_episodes * env_.config().episode_steps;
    begin_episode();
    for (int i = 0; i < warm_steps; ++i) {
      if (i > 0 && i % env_.config().episode_steps == 0) begin_episode();
      advance(0, 1.0, 0.0, false);
    }
    begin_episode();
    for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
      const double eps = cfg_.decayed(cfg_.epsilon, epoch);
      const double noise = cfg_.decayed(cfg_.noise_coeff, epoch);
      for (int k = 0; k < cfg_.steps_per_epoch; ++k) advance(epoch, eps, noise, true);
    }
    result_.last = env_.state();
    result_.updates = agent_.updates();
    return std::move(result_);
  }

  /// actor.ckpt, critic1.ckpt, critic2.ckpt, targets.ckpt, optimizer.ckpt,
  /// buffer.csv.
  void save_checkpoint(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    agent_.save(dir);
    std::ofstream os(dir / "buffer.csv");
    if (!os) throw IoError("cannot write " + (dir / "buffer.csv").string());
    buffer_.write_csv(os);
  }

 private:
  Agent make_agent() {
    cfg_.validate();
    env_.reset();
    if (cfg_.td3.reward_scale == 0.0) cfg_.td3.reward_scale = 1.0 / std::max(std::abs(env_.d0()), 1e-12);
    return Agent(env_.state_dim(), ActionMapper::kParams, 1, cfg_.td3, rng_);
  }

  void begin_episode() {
    env_.reset();
    ou_.reset();
    cum_ = 0.0;
    similar_.reset();
    ++episode_;
  }

  void emit(TraceRow row) {
    if (on_row_) on_row_(row);
    result_.trace.push_back(std::move(row));
  }

  void track_best() {
    const auto& s = env_.state();
    if (s.value.d < result_.best_d) {
      result_.best_d = s.value.d;
      result_.best = s;
    }
  }

  void advance(int epoch, double eps, double noise, bool learn) {
    if (learn && (env_.state().t >= env_.config().episode_steps || cum_ < cfg_.min_cumreward)) begin_episode();
    const EnvState before = env_.state();
    const Eigen::VectorXd s0 = env_.encode();
    ActionChoice choice;
    if (!learn) {
      choice = random_action(ActionMapper::kParams, 1, rng_);
    } else if (similar_) {
      choice = *similar_;
      std::normal_distribution<double> nd(0.0, cfg_.similar_sigma);
      choice.params[1] = std::clamp(choice.params[1] + nd(rng_), -1.0, 1.0);
      choice.params[2] = std::clamp(choice.params[2] + nd(rng_), -1.0, 1.0);
    } else {
      choice = select_action(agent_.actor(), s0, eps, noise, ou_, rng_);
    }
    similar_.reset();

    const StepResult res = env_.step(env_.mapper().to_action(choice.params));
    TraceRow row{episode_, epoch, ++step_, env_.state().t, res.d, res.reward, 0.0, noise, eps, {}, false,
                 res.infeasible || res.solver_failed};
    double chosen_reward = res.reward;
    std::optional<TraceRow> retry_row;
    if (learn && cfg_.retry && res.reward < cfg_.min_reward) {
      auto r = opposite_retry(env_, before, choice, res);
      buffer_.push(std::move(r.first));
      buffer_.push(std::move(r.second));
      chosen_reward = std::max(res.reward, r.second_result.reward);
      if (r.kept_second) choice.params = opposite_params(choice.params);
      retry_row = TraceRow{episode_, epoch, step_, env_.state().t, r.second_result.d, r.second_result.reward, 0.0, noise,
                           eps, {}, true, r.second_result.infeasible || r.second_result.solver_failed};
    } else {
      buffer_.push({s0, choice.types, choice.params, res.reward, env_.encode(), res.done});
    }
    cum_ += chosen_reward;
    track_best();

    if (learn && chosen_reward > 0.0 && buffer_.size() > 1 && chosen_reward > buffer_.reward_quantile(cfg_.similar_quantile))
      similar_ = choice;

    if (learn) {
      const std::size_t batch = buffer_.size() >= cfg_.batch_switch ? cfg_.batch_large : cfg_.batch_small;
      if (buffer_.size() >= batch)
        for (int u = 0; u < cfg_.updates_per_step; ++u)
          row.losses = td3_update(agent_, buffer_.sample(batch, rng_, cfg_.fractions), rng_);
    }
    row.cumreward = cum_;
    row.state_d = env_.state().value.d;
    emit(row);
    if (retry_row) {
      retry_row->cumreward = cum_;
      retry_row->state_d = row.state_d;
      emit(*retry_row);
    }
  }

  Environment& env_;
  TrainConfig cfg_;
  std::mt19937_64 rng_;
  Agent agent_;
  ReplayBuffer buffer_;
  OuProcess ou_;
  std::function<void(const TraceRow&)> on_row_;
  TrainResult result_;
  std::optional<ActionChoice> similar_;
  double cum_ = 0.0;
  int episode_ = 0;
  long step_ = 0;
};

// ---------------------------------------------------------------------------
// Agent checkpoints
// ---------------------------------------------------------------------------

inline void Agent::save(const std::filesystem::path& dir) const {
  auto put = [&](const std::string& file, auto&& fill) {
    nn::Checkpoint ck;
    fill(ck);
    nn::save_checkpoint((dir / file).string(), ck);
  };
  put("actor.ckpt", [&](nn::Checkpoint& ck) { nn::export_params(ck, actor_.params()); });
  put("critic1.ckpt", [&](nn::Checkpoint& ck) { nn::export_params(ck, critic1_.params("critic1")); });
  put("critic2.ckpt", [&](nn::Checkpoint& ck) { nn::export_params(ck, critic2_.params("critic2")); });
  put("targets.ckpt", [&](nn::Checkpoint& ck) {
    nn::export_params(ck, actor_target_.params("actor_target"));
    nn::export_params(ck, critic1_target_.params("critic1_target"));
    nn::export_params(ck, critic2_target_.params("critic2_target"));
  });
  put("optimizer.ckpt", [&](nn::Checkpoint& ck) {
    auto& self = const_cast<Agent&>(*this);
    nn::export_optimizer(ck, "actor", self.actor_opt_);
    nn::export_optimizer(ck, "critic1", self.critic1_opt_);
    nn::export_optimizer(ck, "critic2", self.critic2_opt_);
    ck["updates"] = nn::Matrix::Constant(1, 1, static_cast<double>(updates_));
  });
}

inline void Agent::load(const std::filesystem::path& dir) {
  auto get = [&](const std::string& file) { return nn::load_checkpoint((dir / file).string()); };
  nn::import_params(get("actor.ckpt"), actor_.params());
  nn::import_params(get("critic1.ckpt"), critic1_.params("critic1"));
  nn::import_params(get("critic2.ckpt"), critic2_.params("critic2"));
  const auto t = get("targets.ckpt");
  nn::import_params(t, actor_target_.params("actor_target"));
  nn::import_params(t, critic1_target_.params("critic1_target"));
  nn::import_params(t, critic2_target_.params("critic2_target"));
  const auto o = get("optimizer.ckpt");
  nn::import_optimizer(o, "actor", actor_opt_);
  nn::import_optimizer(o, "critic1", critic1_opt_);
  nn::import_optimizer(o, "critic2", critic2_opt_);
  const auto it = o.find("updates");
  if (it == o.end()) throw IoError("optimizer checkpoint lacks 'updates'");
  updates_ = static_cast<long>(it->second(0, 0));
}

}  // namespace shapeopt::rl
