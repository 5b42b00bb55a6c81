#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "shapeopt/rl/td3.hpp"

using namespace shapeopt;
using namespace shapeopt::rl;

namespace {

EnvConfig surrogate_config() {
  EnvConfig c;
  c.objective.mode = ObjectiveMode::surrogate;
  c.layers = 16;
  return c;
}

Environment& surrogate_env() {
  static Environment env(surrogate_config());
  return env;
}

Td3Config small_td3() {
  Td3Config c;
  c.hidden = 16;
  c.embed = 8;
  c.reward_scale = 1.0;
  return c;
}

Transition random_transition(std::mt19937_64& rng, Eigen::Index dim = 68, bool done = false) {
  std::normal_distribution<double> nd;
  Transition t;
  t.state = Eigen::VectorXd::NullaryExpr(dim, [&] { return nd(rng); });
  t.next_state = Eigen::VectorXd::NullaryExpr(dim, [&] { return nd(rng); });
  t.types = Eigen::VectorXd::Ones(1);
  t.params = Eigen::VectorXd::NullaryExpr(4, [&] { return std::tanh(nd(rng)); });
  t.reward = 0.01 * nd(rng);
  t.done = done;
  return t;
}

bool same_state(const EnvState& a, const EnvState& b) {
  if (a.value.d != b.value.d || a.shape.upper.size() != b.shape.upper.size()) return false;
  for (std::size_t i = 0; i < a.shape.upper.size(); ++i)
    if (a.shape.upper[i].y != b.shape.upper[i].y || a.shape.lower[i].y != b.shape.lower[i].y) return false;
  for (std::size_t i = 0; i < a.mesh.vertices.size(); ++i)
    if (a.mesh.vertices[i].x != b.mesh.vertices[i].x || a.mesh.vertices[i].y != b.mesh.vertices[i].y) return false;
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Reward
// ---------------------------------------------------------------------------

TEST(Reward, SimpleSequenceExample) {
  RewardConfig c;
  c.mode = RewardMode::simple;
  const std::vector<double> d{5, 3, 4, 1};
  std::vector<double> r;
  for (std::size_t t = 1; t < d.size(); ++t) r.push_back(compute_reward(d[t - 1], d[t], d[0], static_cast<int>(t), c));
  EXPECT_EQ(r, (std::vector<double>{2, -1, 3}));
  EXPECT_EQ(r[0] + r[1] + r[2], d[0] - d[3]);
}

TEST(Reward, TelescopingAndExplorationBound) {
  std::mt19937_64 rng(11);
  RewardConfig simple;
  simple.mode = RewardMode::simple;
  const RewardConfig gen;
  for (int k = 0; k < 1000; ++k) {
    std::uniform_int_distribution<int> len(1, 200);
    const double d0 = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    std::uniform_real_distribution<double> u(0.0, d0);
    const int n = len(rng);
    double prev = d0, sum = 0.0, bonus = 0.0;
    for (int t = 1; t <= n; ++t) {
      const double cur = u(rng);
      sum += compute_reward(prev, cur, d0, t, simple);
      bonus += compute_reward(prev, cur, d0, t, gen) - compute_reward(prev, cur, d0, t, simple);
      prev = cur;
    }
    ASSERT_NEAR(sum, d0 - prev, 1e-12);
    ASSERT_GE(bonus, 0.0);
    ASSERT_LE(bonus, exploration_bound(d0, gen));
  }
}

TEST(Reward, ZeroWeightReducesToSimple) {
  RewardConfig g;
  g.lambda0 = 0.0;
  RewardConfig s;
  s.mode = RewardMode::simple;
  EXPECT_EQ(compute_reward(0.04, 0.035, 0.045, 3, g), compute_reward(0.04, 0.035, 0.045, 3, s));
  EXPECT_EQ(compute_reward(0.04, 0.04, 0.04, 7, g), 0.0);
}

TEST(Reward, WeightDecaysGeometrically) {
  const RewardConfig c;
  EXPECT_DOUBLE_EQ(exploration_weight(0, c), 0.1);
  EXPECT_NEAR(exploration_weight(3, c), 0.1 * 0.729, 1e-15);
}

TEST(Reward, ConfigValidation) {
  RewardConfig c;
  c.decay = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.penalty = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_reward_mode("fancy"), ConfigError);
  EXPECT_EQ(parse_reward_mode("simple"), RewardMode::simple);
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

TEST(Replay, FullBatchReturnsEveryEntryOnce) {
  std::mt19937_64 rng(1);
  ReplayBuffer b(100);
  for (int i = 0; i < 32; ++i) b.push(random_transition(rng, 4));
  auto idx = b.sample_indices(32, rng);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(idx[i], i);
}

TEST(Replay, BestEntryAlwaysSampled) {
  std::mt19937_64 rng(2);
  ReplayBuffer b(500);
  for (int i = 0; i < 400; ++i) b.push(random_transition(rng, 4));
  const auto best = b.best_index();
  for (int k = 0; k < 200; ++k) {
    const auto idx = b.sample_indices(16, rng);
    ASSERT_NE(std::find(idx.begin(), idx.end(), best), idx.end());
  }
}

TEST(Replay, PoolFractionsRealized) {
  std::mt19937_64 rng(3);
  ReplayBuffer b(1000);
  for (int i = 0; i < 600; ++i) b.push(random_transition(rng, 4));
  const auto idx = b.sample_indices(64, rng);
  ASSERT_EQ(idx.size(), 64u);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(idx[i], 599 - i);  // recent pool
  std::vector<double> r;
  for (std::size_t i = 0; i < 584; ++i) r.push_back(b[i].reward);
  std::sort(r.rbegin(), r.rend());
  for (std::size_t i = 16; i < 32; ++i) EXPECT_GE(b[idx[i]].reward, r[15]);  // best pool
  std::set<std::size_t> uniq(idx.begin(), idx.end());
  EXPECT_EQ(uniq.size(), 64u);
}

TEST(Replay, CapacityAndLiveBestIndex) {
  std::mt19937_64 rng(4);
  ReplayBuffer b(50);
  for (int i = 0; i < 500; ++i) {
    b.push(random_transition(rng, 4));
    ASSERT_LE(b.size(), 50u);
    std::size_t brute = 0;
    for (std::size_t k = 1; k < b.size(); ++k)
      if (b[k].reward > b[brute].reward) brute = k;
    ASSERT_EQ(b.best_index(), brute);
  }
}

TEST(Replay, Errors) {
  std::mt19937_64 rng(5);
  ReplayBuffer b(10);
  EXPECT_THROW(b.best_index(), DomainError);
  b.push(random_transition(rng, 4));
  EXPECT_THROW(b.sample_indices(2, rng), DomainError);
  auto bad = random_transition(rng, 4);
  bad.reward = std::nan("");
  EXPECT_THROW(b.push(bad), DomainError);
  EXPECT_THROW(ReplayBuffer(0), ConfigError);
}

TEST(Replay, QuantileAndCsv) {
  ReplayBuffer b(10);
  for (int i = 0; i < 10; ++i) {
    Transition t{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(4), double(i), Eigen::VectorXd::Zero(2), i == 9};
    b.push(t);
  }
  EXPECT_EQ(b.reward_quantile(0.9), 8.0);
  std::ostringstream os;
  b.write_csv(os);
  const std::string csv = os.str();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
}

// ---------------------------------------------------------------------------
// OU noise
// ---------------------------------------------------------------------------

TEST(OuNoise, FixedPointWithoutDiffusion) {
  std::mt19937_64 rng(6);
  OuConfig c{0.3, 0.15, 0.0, 1.0};
  double x = 0.3;
  for (int i = 0; i < 100; ++i) x = ou_noise_step(x, c, rng);
  EXPECT_EQ(x, 0.3);
}

TEST(OuNoise, GeometricDecayToMean) {
  std::mt19937_64 rng(7);
  OuConfig c{0.0, 0.15, 0.0, 1.0};
  double x = 1.0;
  for (int k = 1; k <= 20; ++k) {
    x = ou_noise_step(x, c, rng);
    EXPECT_NEAR(x, std::pow(0.85, k), 1e-14);
  }
}

TEST(OuNoise, StationaryVariance) {
  std::mt19937_64 rng(8);
  const OuConfig c{};
  double x = 0.0, s = 0.0, s2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < 1000; ++i) x = ou_noise_step(x, c, rng);
  for (int i = 0; i < n; ++i) {
    x = ou_noise_step(x, c, rng);
    s += x;
    s2 += x * x;
  }
  const double var = s2 / n - (s / n) * (s / n);
  // exact for the discrete recurrence: sigma^2 / (1 - (1 - theta)^2); the
  // continuous-time value sigma^2 / (2 theta) is within 8% of it
  const double expected = c.sigma * c.sigma / (2.0 * c.theta);
  EXPECT_NEAR(var, expected, 0.1 * expected);
}

TEST(OuNoise, ProcessResets) {
  std::mt19937_64 rng(9);
  OuProcess p(4, {});
  p.step(rng);
  EXPECT_GT(p.value().norm(), 0.0);
  p.reset();
  EXPECT_EQ(p.value().norm(), 0.0);
  EXPECT_THROW(OuProcess(2, OuConfig{0, 0.15, -1.0, 1.0}), ConfigError);
}

// ---------------------------------------------------------------------------
// Action selection
// ---------------------------------------------------------------------------

TEST(ActionSelection, FullEpsilonIgnoresActor) {
  std::mt19937_64 init(1);
  nn::Actor a1({68, 4, 1, 16}, init), a2({68, 4, 1, 16}, init);
  OuProcess ou1(4, {}), ou2(4, {});
  std::mt19937_64 r1(5), r2(5);
  const Eigen::VectorXd s = Eigen::VectorXd::Random(68);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto x = select_action(a1, s, 1.0, 1.0, ou1, r1);
    const auto y = select_action(a2, s, 1.0, 1.0, ou2, r2);
    ASSERT_TRUE(x.random);
    ASSERT_EQ(x.params, y.params);
    mean += x.params;
  }
  mean /= n;
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 0.03);  // uniform on [-1,1]
}

TEST(ActionSelection, GreedyIsDeterministic) {
  std::mt19937_64 init(2);
  nn::Actor a({68, 4, 1, 16}, init);
  OuProcess ou(4, {});
  std::mt19937_64 r1(1), r2(99);
  const Eigen::VectorXd s = Eigen::VectorXd::Random(68);
  const auto x = select_action(a, s, 0.0, 0.0, ou, r1);
  const auto y = select_action(a, s, 0.0, 0.0, ou, r2);
  EXPECT_FALSE(x.random);
  EXPECT_EQ(x.params, y.params);
  EXPECT_NEAR(x.types.sum(), 1.0, 1e-12);
}

TEST(ActionSelection, MappedActionsStayInBounds) {
  std::mt19937_64 init(3), rng(4);
  nn::Actor a({68, 4, 1, 16}, init);
  OuProcess ou(4, {});
  const ActionMapper m{};
  for (int i = 0; i < 5000; ++i) {
    const Eigen::VectorXd s = 5.0 * Eigen::VectorXd::Random(68);
    const auto c = select_action(a, s, 0.3, 3.0, ou, rng);
    const auto act = m.to_action(c.params);
    ASSERT_LE(std::abs(act.y_upper_change), m.bounds.max_step);
    ASSERT_LE(std::abs(act.y_lower_change), m.bounds.max_step);
    ASSERT_GT(act.x_target, 0.0);
    ASSERT_LT(act.x_target, 1.0);
    ASSERT_GE(act.delta, m.bounds.delta_min);
    ASSERT_LE(act.delta, m.bounds.delta_max);
    ASSERT_NO_THROW(geometry::validate_action(act, m.bounds));
  }
}

TEST(ActionSelection, MapperRoundTrip) {
  const ActionMapper m{};
  Eigen::VectorXd p(4);
  p << -0.3, 0.7, -1.0, 0.25;
  const Eigen::VectorXd q = m.to_params(m.to_action(p));
  EXPECT_LT((p - q).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(m.to_action(Eigen::VectorXd::Zero(3)), DomainError);
}

TEST(ActionSelection, OppositeNegatesDisplacementsOnly) {
  Eigen::VectorXd p(4);
  p << 0.1, 0.4, -0.2, 0.9;
  const auto q = opposite_params(p);
  EXPECT_EQ(q[0], p[0]);
  EXPECT_EQ(q[1], -p[1]);
  EXPECT_EQ(q[2], -p[2]);
  EXPECT_EQ(q[3], p[3]);
  const ActionMapper m{};
  const auto a = m.to_action(p), b = m.to_action(q);
  EXPECT_EQ(a.x_target, b.x_target);
  EXPECT_EQ(a.delta, b.delta);
  EXPECT_EQ(a.y_upper_change, -b.y_upper_change);
  EXPECT_EQ(a.y_lower_change, -b.y_lower_change);
}

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

TEST(Environment, SurrogateBaselineAndMinimum) {
  auto& env = surrogate_env();
  env.reset();
  const auto& sc = env.config().objective.surrogate;
  EXPECT_NEAR(env.d0(), sc.d_start, 1e-15);
  for (const auto& a : sc.target_actions) {
    const auto r = env.step(a);
    ASSERT_FALSE(r.infeasible) << r.reason;
  }
  EXPECT_NEAR(env.state().value.d, sc.d_min, 1e-15);
  EXPECT_EQ(env.surrogate_minimum(), sc.d_min);
}

TEST(Environment, ZeroActionIsNoOp) {
  auto cfg = surrogate_config();
  cfg.reward.mode = RewardMode::simple;
  Environment env(cfg);
  env.reset();
  env.step({0.4, 0.003, -0.001, 0.3});
  const auto before = env.state();
  const auto r = env.step({0.5, 0.0, 0.0, 0.4});
  EXPECT_FALSE(r.infeasible);
  EXPECT_EQ(r.d, before.value.d);
  EXPECT_EQ(r.reward, 0.0);
  EXPECT_EQ(env.state().t, before.t + 1);
}

TEST(Environment, InfeasibleActionLeavesStateUnchanged) {
  auto& env = surrogate_env();
  env.reset();
  env.step({0.4, 0.003, -0.001, 0.3});
  const auto before = env.state();
  // pulls the lower surface above the upper one near the trailing edge
  const auto r = env.step({0.98, -0.005, 0.005, 0.2});
  EXPECT_TRUE(r.infeasible);
  EXPECT_EQ(r.reward, env.config().reward.penalty);
  EXPECT_LT(r.reward, 0.0);
  EXPECT_EQ(r.d, before.value.d);
  EXPECT_TRUE(same_state(env.state(), before));
  EXPECT_EQ(env.state().t, before.t + 1);
}

TEST(Environment, ThicknessViolationIsPenalized) {
  auto& env = surrogate_env();
  env.reset();
  const auto before = env.state();
  // thins the whole section slightly; the surfaces stay ordered
  const geometry::DeformAction a{0.5, -0.002, 0.001, 0.2};
  const auto moved = geometry::apply_action(before.shape, a);
  ASSERT_TRUE(moved.feasible);
  ASSERT_FALSE(geometry::check_thickness(moved.shape, env.thickness()).pass);
  const auto r = env.step(a);
  EXPECT_TRUE(r.infeasible);
  EXPECT_EQ(r.reason, "thickness");
  EXPECT_EQ(r.reward, env.config().reward.penalty);
  EXPECT_TRUE(same_state(env.state(), before));
}

TEST(Environment, RewardMatchesRecomputation) {
  auto& env = surrogate_env();
  env.reset();
  std::mt19937_64 rng(12);
  int ok = 0;
  for (int i = 0; i < 40; ++i) {
    const double prev = env.state().value.d;
    const auto a = random_action(4, 1, rng);
    const auto r = env.step(env.mapper().to_action(a.params));
    if (r.infeasible) continue;
    ++ok;
    ASSERT_NEAR(r.reward, compute_reward(prev, r.d, env.d0(), env.state().t, env.config().reward), 1e-12);
  }
  EXPECT_GT(ok, 10);
}

TEST(Environment, Deterministic) {
  Environment a(surrogate_config()), b(surrogate_config());
  a.reset();
  b.reset();
  EXPECT_EQ(a.d0(), b.d0());
  std::mt19937_64 rng(13);
  for (int i = 0; i < 10; ++i) {
    const auto act = a.mapper().to_action(random_action(4, 1, rng).params);
    const auto ra = a.step(act), rb = b.step(act);
    ASSERT_EQ(ra.d, rb.d);
    ASSERT_EQ(ra.reward, rb.reward);
  }
  EXPECT_EQ(a.encode(), b.encode());
}

TEST(Environment, EncodingStartsAtZero) {
  auto& env = surrogate_env();
  env.reset();
  EXPECT_EQ(env.state_dim(), 68);
  EXPECT_EQ(env.encode().norm(), 0.0);
}

TEST(Environment, BaselineSolverFailureIsConfigError) {
  EnvConfig c;
  c.layers = 8;
  c.objective.refine_steps = 0;
  c.objective.dwr.coarse_newton.max_iter = 1;
  Environment env(c);
  EXPECT_THROW(env.reset(), ConfigError);
}

TEST(Environment, ConfigValidation) {
  auto c = surrogate_config();
  c.x_max = 1.0;
  EXPECT_THROW(Environment{c}, ConfigError);
  c = surrogate_config();
  c.objective.surrogate.d_start = 0.01;
  EXPECT_THROW(Environment{c}, ConfigError);
  EXPECT_THROW(parse_objective_mode("lift"), ConfigError);
  EXPECT_EQ(parse_objective_mode("lift_drag_ratio"), ObjectiveMode::ratio);
}

// ---------------------------------------------------------------------------
// TD3 update
// ---------------------------------------------------------------------------

TEST(Td3, ZeroDiscountTargetsAreRewards) {
  std::mt19937_64 rng(20);
  auto c = small_td3();
  c.gamma = 0.0;
  Agent agent(68, 4, 1, c, rng);
  std::vector<Transition> ts;
  for (int i = 0; i < 8; ++i) ts.push_back(random_transition(rng));
  std::vector<const Transition*> ptr;
  for (const auto& t : ts) ptr.push_back(&t);
  const auto y = critic_targets(agent, make_batch(ptr), rng);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(y[i], ts[static_cast<std::size_t>(i)].reward);
}

TEST(Td3, TerminalTransitionsDoNotBootstrap) {
  std::mt19937_64 rng(21);
  Agent agent(68, 4, 1, small_td3(), rng);
  std::vector<Transition> ts;
  for (int i = 0; i < 8; ++i) ts.push_back(random_transition(rng, 68, i % 2 == 0));
  std::vector<const Transition*> ptr;
  for (const auto& t : ts) ptr.push_back(&t);
  const auto y = critic_targets(agent, make_batch(ptr), rng);
  for (int i = 0; i < 8; ++i) {
    if (i % 2 == 0)
      EXPECT_EQ(y[i], ts[static_cast<std::size_t>(i)].reward);
    else
      EXPECT_NE(y[i], ts[static_cast<std::size_t>(i)].reward);
  }
}

TEST(Td3, RewardScaleMultipliesRewards) {
  std::mt19937_64 rng(22);
  auto c = small_td3();
  c.gamma = 0.0;
  c.reward_scale = 4.0;
  Agent agent(68, 4, 1, c, rng);
  auto t = random_transition(rng);
  const auto y = critic_targets(agent, make_batch({&t}), rng);
  EXPECT_EQ(y[0], 4.0 * t.reward);
}

TEST(Td3, TwinCriticsWithEqualWeightsGiveEqualLosses) {
  std::mt19937_64 rng(23);
  Agent agent(68, 4, 1, small_td3(), rng);
  nn::copy_params(agent.critic2().params(), agent.critic1().params());
  std::vector<Transition> ts;
  for (int i = 0; i < 16; ++i) ts.push_back(random_transition(rng));
  std::vector<const Transition*> ptr;
  for (const auto& t : ts) ptr.push_back(&t);
  for (int k = 0; k < 3; ++k) {
    const auto l = td3_update(agent, ptr, rng);
    EXPECT_EQ(l.critic1, l.critic2);
  }
}

TEST(Td3, DelayedActorAndSoftTargets) {
  std::mt19937_64 rng(24);
  Agent agent(68, 4, 1, small_td3(), rng);
  std::vector<Transition> ts;
  for (int i = 0; i < 16; ++i) ts.push_back(random_transition(rng));
  std::vector<const Transition*> ptr;
  for (const auto& t : ts) ptr.push_back(&t);
  const nn::Matrix actor0 = agent.actor().params()[0].second.value();
  const nn::Matrix target0 = agent.actor_target().params()[0].second.value();
  EXPECT_EQ(actor0, target0);

  const auto l1 = td3_update(agent, ptr, rng);
  EXPECT_TRUE(std::isnan(l1.actor));
  EXPECT_EQ(agent.actor().params()[0].second.value(), actor0);
  EXPECT_TRUE(std::isfinite(l1.critic1));

  const auto l2 = td3_update(agent, ptr, rng);
  EXPECT_TRUE(std::isfinite(l2.actor));
  const nn::Matrix actor1 = agent.actor().params()[0].second.value();
  EXPECT_NE(actor1, actor0);
  const nn::Matrix expected = 0.995 * target0 + 0.005 * actor1;
  EXPECT_LT((agent.actor_target().params()[0].second.value() - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(agent.updates(), 2);
}

TEST(Td3, CriticLossDecreasesOnFixedBatch) {
  std::mt19937_64 rng(25);
  auto c = small_td3();
  c.gamma = 0.0;
  Agent agent(68, 4, 1, c, rng);
  std::vector<Transition> ts;
  for (int i = 0; i < 32; ++i) ts.push_back(random_transition(rng));
  std::vector<const Transition*> ptr;
  for (const auto& t : ts) ptr.push_back(&t);
  const double first = td3_update(agent, ptr, rng).critic1;
  double last = first;
  for (int k = 0; k < 200; ++k) last = td3_update(agent, ptr, rng).critic1;
  EXPECT_LT(last, 0.1 * first);
}

TEST(Td3, CheckpointRoundTrip) {
  std::mt19937_64 rng(26);
  Agent a(68, 4, 1, small_td3(), rng);
  std::vector<Transition> ts;
  for (int i = 0; i < 8; ++i) ts.push_back(random_transition(rng));
  std::vector<const Transition*> ptr;
  for (const auto& t : ts) ptr.push_back(&t);
  for (int k = 0; k < 3; ++k) td3_update(a, ptr, rng);
  const auto dir = std::filesystem::temp_directory_path() / "shapeopt_td3_ckpt";
  std::filesystem::create_directories(dir);
  a.save(dir);
  std::mt19937_64 other(99);
  Agent b(68, 4, 1, small_td3(), other);
  b.load(dir);
  EXPECT_EQ(b.updates(), 3);
  const auto pa = a.critic2_target().params(), pb = b.critic2_target().params();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i].second.value(), pb[i].second.value());
  std::mt19937_64 ra(5), rb(5);
  const auto la = td3_update(a, ptr, ra), lb = td3_update(b, ptr, rb);
  EXPECT_EQ(la.critic1, lb.critic1);
  EXPECT_EQ(la.actor, lb.actor);
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Opposite retry
// ---------------------------------------------------------------------------

TEST(OppositeRetry, KeepsTheDescentDirectionOnSurrogate) {
  auto& env = surrogate_env();
  env.reset();
  std::mt19937_64 rng(30);
  int checked = 0;
  for (int i = 0; i < 40; ++i) {
    auto choice = random_action(4, 1, rng);
    // equal displacements leave the thickness unchanged, so both signs are feasible
    choice.params[1] *= 0.5;
    choice.params[2] = choice.params[1];
    const auto before = env.state();
    // first-order change of the objective along the displacement pair
    auto d_at = [&](double eps) {
      Eigen::VectorXd p = choice.params;
      p[1] *= eps;
      p[2] *= eps;
      env.restore(before);
      const auto r = env.step(env.mapper().to_action(p));
      return r.infeasible ? std::nan("") : r.d;
    };
    const double slope = d_at(1e-3) - d_at(-1e-3);
    env.restore(before);
    const auto first = env.step(env.mapper().to_action(choice.params));
    const auto out = opposite_retry(env, before, choice, first);
    env.restore(before);
    if (first.infeasible || out.second_result.infeasible || std::isnan(slope) || std::abs(slope) < 1e-9) continue;
    ++checked;
    // kept direction has a non-positive first-order change
    const double sign = out.kept_second ? -1.0 : 1.0;
    EXPECT_LT(sign * slope, 0.0) << "case " << i;
  }
  EXPECT_GE(checked, 30);
}

TEST(OppositeRetry, InfeasibleFirstKeepsOpposite) {
  auto cfg = surrogate_config();
  cfg.reward.penalty = -1.0;
  Environment env(cfg);
  env.reset();
  const auto before = env.state();
  ActionChoice choice;
  choice.types = Eigen::VectorXd::Ones(1);
  choice.params = env.mapper().to_params({0.98, -0.005, 0.005, 0.2});
  const auto first = env.step(env.mapper().to_action(choice.params));
  ASSERT_TRUE(first.infeasible);
  const auto out = opposite_retry(env, before, choice, first);
  EXPECT_EQ(out.first.reward, env.config().reward.penalty);
  EXPECT_EQ(out.first.state, out.first.next_state);
  EXPECT_FALSE(out.second_result.infeasible);
  EXPECT_TRUE(out.kept_second);
  EXPECT_EQ(out.second.params, opposite_params(choice.params));
  EXPECT_EQ(out.second.next_state, env.encode());
  EXPECT_EQ(env.state().value.d, out.second_result.d);
  EXPECT_EQ(env.state().t, before.t + 1);
}

TEST(OppositeRetry, TieKeepsFirst) {
  auto cfg = surrogate_config();
  cfg.reward.mode = RewardMode::simple;
  Environment env(cfg);
  env.reset();
  const auto before = env.state();
  ActionChoice choice;
  choice.types = Eigen::VectorXd::Ones(1);
  choice.params = env.mapper().to_params({0.5, 0.0, 0.0, 0.3});
  const auto first = env.step(env.mapper().to_action(choice.params));
  const auto out = opposite_retry(env, before, choice, first);
  EXPECT_EQ(out.first_result.reward, 0.0);
  EXPECT_EQ(out.second_result.reward, 0.0);
  EXPECT_FALSE(out.kept_second);
  EXPECT_EQ(env.state().value.d, before.value.d);
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

namespace {

TrainConfig tiny_train() {
  TrainConfig c;
  c.td3 = small_td3();
  c.td3.reward_scale = 0.0;
  c.warmup_episodes = 1;
  c.epochs = 7;
  c.steps_per_epoch = 4;
  c.batch_small = 4;
  c.batch_large = 8;
  c.batch_switch = 20;
  return c;
}

EnvConfig tiny_env() {
  auto c = surrogate_config();
  c.episode_steps = 8;
  return c;
}

}  // namespace

TEST(Trainer, TraceBookkeeping) {
  Environment env(tiny_env());
  Trainer tr(env, tiny_train(), 7);
  const auto res = tr.run();
  long plain = 0, retry = 0;
  for (const auto& r : res.trace) (r.retry ? retry : plain)++;
  EXPECT_EQ(plain, 8 + 7 * 4);
  EXPECT_EQ(tr.buffer().size(), static_cast<std::size_t>(plain + retry));
  EXPECT_EQ(res.d0, env.config().objective.surrogate.d_start);
  EXPECT_LE(res.best_d, res.d0);
  EXPECT_EQ(res.best.value.d, res.best_d);
  for (const auto& r : res.trace) {
    if (r.epoch == 0) {
      EXPECT_FALSE(r.retry);
      EXPECT_TRUE(std::isnan(r.losses.critic1));
    } else {
      EXPECT_DOUBLE_EQ(r.noise_coeff, std::pow(0.85, r.epoch / 3));
      EXPECT_DOUBLE_EQ(r.epsilon, 0.9 * std::pow(0.85, r.epoch / 3));
    }
  }
  EXPECT_GT(res.updates, 0);
}

TEST(Trainer, SameSeedSameTrace) {
  auto run = [](std::uint64_t seed) {
    Environment env(tiny_env());
    Trainer tr(env, tiny_train(), seed);
    std::ostringstream os;
    write_trace(os, tr.run().trace);
    return os.str();
  };
  const auto a = run(3), b = run(3), c = run(4);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a.substr(0, a.find('\n')),
            "episode,epoch,step,t,D,reward,cumreward,noise_coeff,epsilon,critic1_loss,critic2_loss,actor_loss,retry_flag,"
            "infeasible_flag");
}

TEST(Trainer, CheckpointDirectory) {
  Environment env(tiny_env());
  Trainer tr(env, tiny_train(), 1);
  tr.run();
  const auto dir = std::filesystem::temp_directory_path() / "shapeopt_trainer_ckpt";
  tr.save_checkpoint(dir);
  for (const char* f : {"actor.ckpt", "critic1.ckpt", "critic2.ckpt", "targets.ckpt", "optimizer.ckpt", "buffer.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  std::filesystem::remove_all(dir);
}
