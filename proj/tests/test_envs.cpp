#include "dicl/envs.hpp"
#include "dicl/error.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace dicl;
using namespace dicl::envs;

namespace {

TabularPolicy deterministic(int n_states, int n_actions, int action) {
  TabularPolicy p;
  p.pi = MatrixXd::Zero(n_states, n_actions);
  p.pi.col(action).setOnes();
  return p;
}

}  // namespace

TEST_CASE("policy transition selects and averages kernels") {
  const auto mdp = random_mdp(4, 2, 0.9, 1.0, 7);
  CHECK(policy_transition(mdp, deterministic(4, 2, 1)) == mdp.transition[1]);
  TabularPolicy uni;
  uni.pi = MatrixXd::Constant(4, 2, 0.5);
  CHECK((policy_transition(mdp, uni) - 0.5 * (mdp.transition[0] + mdp.transition[1])).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("random kernels are row-stochastic, also after products") {
  const auto mdp = random_mdp(5, 3, 0.9, 1.0, 11);
  const auto pi = random_policy(5, 3, 12);
  const MatrixXd p = policy_transition(mdp, pi);
  MatrixXd power = p;
  for (int i = 0; i < 10; ++i) power = power * p;
  for (const MatrixXd* m : {&p, static_cast<const MatrixXd*>(&power)}) {
    CHECK(((*m).rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK((m->array() >= 0.0).all());
  }
  CHECK(std::abs(mdp.initial.sum() - 1.0) <= 1e-12);
  CHECK(mdp.reward.minCoeff() >= 0.0);
  CHECK(mdp.reward.maxCoeff() <= 1.0);
  CHECK_NOTHROW(mdp.validate());
}

TEST_CASE("exact return: closed forms") {
  auto mdp = random_mdp(3, 2, 0.8, 1.0, 3);
  const auto pi = random_policy(3, 2, 4);
  mdp.reward.setOnes();
  CHECK(exact_return(mdp, pi) == doctest::Approx(1.0 / (1.0 - 0.8)).epsilon(1e-12));
  auto zero = random_mdp(3, 2, 0.0, 1.0, 5);
  CHECK(exact_return(zero, pi) == doctest::Approx(zero.initial.dot(policy_reward(zero, pi))).epsilon(1e-14));
}

TEST_CASE("exact return agrees with value iteration") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto mdp = random_mdp(6, 3, 0.95, 1.0, seed);
    const auto pi = random_policy(6, 3, seed + 100);
    const VectorXd v = value_iteration(mdp, pi);
    CHECK(std::abs(mdp.initial.dot(v) - exact_return(mdp, pi)) < 1e-8);
  }
}

TEST_CASE("exact return matches Monte Carlo over sampled state-action paths") {
  const auto mdp = random_mdp(3, 2, 0.9, 1.0, 21);
  const auto pi = random_policy(3, 2, 22);
  std::mt19937_64 rng(23);
  auto draw = [&](const VectorXd& p) {
    std::discrete_distribution<int> d(p.data(), p.data() + p.size());
    return d(rng);
  };
  const int n = 100000, horizon = 200;  // 0.9^200 * 10 ~ 7e-9
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    int s = draw(mdp.initial);
    double ret = 0.0, disc = 1.0;
    for (int t = 0; t < horizon; ++t) {
      const int a = draw(pi.pi.row(s).transpose());
      ret += disc * mdp.reward(s, a);
      s = draw(mdp.transition[static_cast<std::size_t>(a)].row(s).transpose());
      disc *= mdp.gamma;
    }
    sum += ret;
    sum_sq += ret * ret;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / (n - 1));
  CHECK(std::abs(mean - exact_return(mdp, pi)) <= 3.0 * se);
}

TEST_CASE("tabular validation") {
  auto mdp = random_mdp(3, 2, 0.9, 1.0, 1);
  mdp.transition[0](0, 0) += 0.1;
  CHECK_THROWS_AS(mdp.validate(), Error);
  auto g = random_mdp(3, 2, 0.9, 1.0, 1);
  g.gamma = 1.0;
  CHECK_THROWS_AS(g.validate(), Error);
  TabularPolicy bad;
  bad.pi = MatrixXd::Constant(3, 2, 0.4);
  CHECK_THROWS_AS(bad.validate(3, 2), Error);
}

TEST_CASE("pendulum equilibrium and reward formula") {
  PendulumEnv env;
  env.set_state(0.0, 0.0);
  const auto up = env.step(VectorXd::Zero(1));
  CHECK(up.reward == 0.0);
  CHECK(env.theta() == 0.0);
  CHECK(env.theta_dot() == 0.0);
  env.set_state(std::numbers::pi, 0.0);
  CHECK(env.step(VectorXd::Zero(1)).reward == doctest::Approx(-std::numbers::pi * std::numbers::pi).epsilon(1e-12));
}

TEST_CASE("pendulum clips torque and speed") {
  const PendulumEnv::Params p;
  const auto [a, ra] = PendulumEnv::dynamics(p, Eigen::Vector2d(0.3, 0.1), 50.0);
  const auto [b, rb] = PendulumEnv::dynamics(p, Eigen::Vector2d(0.3, 0.1), 2.0);
  CHECK(a == b);
  CHECK(ra == doctest::Approx(rb));
  const auto [c, rc] = PendulumEnv::dynamics(p, Eigen::Vector2d(1.5, 7.9), 2.0);
  CHECK(c(1) == p.max_speed);
  CHECK(c(0) > -std::numbers::pi);
  CHECK(c(0) <= std::numbers::pi);
}

TEST_CASE("pendulum energy stays bounded under zero torque") {
  // The semi-implicit integrator is symplectic: energy oscillates within O(dt)
  // of its start rather than drifting.
  PendulumEnv env;
  env.set_state(2.0, 0.0);
  const double e0 = env.energy();
  double lo = e0, hi = e0;
  for (int i = 0; i < 100; ++i) {
    env.step(VectorXd::Zero(1));
    CHECK(std::abs(env.theta_dot()) < env.params().max_speed);
    lo = std::min(lo, env.energy());
    hi = std::max(hi, env.energy());
  }
  const double scale = 3.0 * env.params().g / (2.0 * env.params().l);
  CHECK(hi - lo < 2.0 * scale * env.params().dt * 3.0);
  CHECK(std::abs(env.energy() - e0) < 2.0 * scale * env.params().dt * 3.0);
}

TEST_CASE("wrap angle") {
  CHECK(wrap_angle(std::numbers::pi) == std::numbers::pi);
  CHECK(wrap_angle(-std::numbers::pi) == std::numbers::pi);
  CHECK(wrap_angle(3.0 * std::numbers::pi / 2.0) == doctest::Approx(-std::numbers::pi / 2.0));
  CHECK(wrap_angle(0.25) == 0.25);
}

TEST_CASE("pendulum rollouts: invariants and reproducibility") {
  PendulumEnv env;
  const auto policy = uniform_random_policy(1, env.action_bound());
  const auto a = collect_rollout(env, policy, 200, 5);
  for (Eigen::Index t = 0; t < 200; ++t) {
    const double c = a.states(t, 0), s = a.states(t, 1);
    CHECK(std::abs(c * c + s * s - 1.0) < 1e-12);
    CHECK(std::abs(a.states(t, 2)) <= 8.0);
    CHECK((*a.rewards)(t) <= 0.0);
  }
  PendulumEnv env2;
  const auto b = collect_rollout(env2, policy, 200, 5);
  CHECK(a.states == b.states);
  CHECK(*a.actions == *b.actions);
  CHECK(collect_rollout(env2, policy, 1, 5).length() == 1);
  CHECK_THROWS_AS(collect_rollout(env2, policy, 0, 5), Error);
}

TEST_CASE("episodes reset at their length") {
  PendulumEnv::Params p;
  p.episode_length = 10;
  PendulumEnv env(p);
  const auto t = collect_rollout(env, constant_policy(VectorXd::Constant(1, 2.0)), 25, 3);
  // Step 10 is a reset observation, which differs from continuing the dynamics.
  const auto [cont, r] = PendulumEnv::dynamics(p, Eigen::Vector2d(std::atan2(t.states(9, 1), t.states(9, 0)), t.states(9, 2)), 2.0);
  CHECK(std::abs(t.states(10, 2) - cont(1)) > 1e-9);
}

TEST_CASE("linear system follows A s + B a") {
  MatrixXd A(2, 2), B(2, 1);
  A << 0.5, 0.1, 0.0, 0.9;
  B << 1.0, 0.5;
  LinearSystemEnv env(A, B, VectorXd::Constant(2, 1.0));
  std::mt19937_64 rng(0);
  const VectorXd s0 = env.reset(rng);
  const auto res = env.step(VectorXd::Constant(1, 0.2));
  CHECK((res.observation - (A * s0 + B * 0.2)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(res.reward == doctest::Approx(-(2.0 + 0.001 * 0.04)));
  CHECK_THROWS_AS(env.step(VectorXd::Zero(2)), Error);
}
