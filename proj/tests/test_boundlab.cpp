#include "dicl/boundlab.hpp"
#include "dicl/error.hpp"

#include <doctest.h>

#include <cmath>

using namespace dicl;
using namespace dicl::boundlab;

namespace {

// Row vector mu0 P^t computed with explicit loops.
std::vector<double> step_dist(const std::vector<double>& d, const MatrixXd& p) {
  std::vector<double> out(d.size(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d.size(); ++j) out[j] += d[i] * p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return out;
}

MatrixXd marginal_kernel(const std::vector<MatrixXd>& kernel, const TabularPolicy& pi) {
  const auto n = kernel.front().rows();
  MatrixXd p = MatrixXd::Zero(n, n);
  for (Eigen::Index s = 0; s < n; ++s)
    for (std::size_t a = 0; a < kernel.size(); ++a) p.row(s) += pi.pi(s, static_cast<Eigen::Index>(a)) * kernel[a].row(s);
  return p;
}

double dot(const std::vector<double>& d, const VectorXd& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) s += d[i] * v(static_cast<Eigen::Index>(i));
  return s;
}

// Brute-force epsilon: explicit state distribution, explicit per-(s, a) TV.
double brute_epsilon(const ModelPair& pair, const TabularPolicy& pi, int T, int H) {
  const auto& m = pair.mdp;
  const MatrixXd p = marginal_kernel(m.transition, pi);
  std::vector<double> d(m.initial.data(), m.initial.data() + m.initial.size());
  double best = 0.0;
  for (int t = 0; t <= H; ++t) {
    if (t >= T) {
      double e = 0.0;
      for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) {
          double tv = 0.0;
          for (int x = 0; x < m.n_states; ++x)
            tv += std::abs(m.transition[static_cast<std::size_t>(a)](s, x) - pair.model[static_cast<std::size_t>(a)](s, x));
          e += d[static_cast<std::size_t>(s)] * pi.pi(s, a) * 0.5 * tv;
        }
      best = std::max(best, e);
    }
    d = step_dist(d, p);
  }
  return best;
}

// Exact expected multi-branch return by enumerating every branch-indicator
// pattern that can span each step.
double exact_multibranch(const ModelPair& pair, const TabularPolicy& pi, double prob, int k, int T, int H) {
  const auto& m = pair.mdp;
  const MatrixXd p = marginal_kernel(m.transition, pi);
  const MatrixXd q = marginal_kernel(pair.model, pi);
  VectorXd r(m.n_states);
  for (int s = 0; s < m.n_states; ++s) r(s) = pi.pi.row(s).dot(m.reward.row(s));
  const VectorXd v = (MatrixXd::Identity(m.n_states, m.n_states) - m.gamma * p).inverse() * r;

  std::vector<std::vector<double>> true_at(static_cast<std::size_t>(H) + 2);
  true_at[0].assign(m.initial.data(), m.initial.data() + m.initial.size());
  for (int t = 1; t <= H + 1; ++t) true_at[static_cast<std::size_t>(t)] = step_dist(true_at[static_cast<std::size_t>(t) - 1], p);
  // Expected reward at t of a branch started at b: mu0 P^b Q^(t-b) r.
  auto branch_reward = [&](int b, int t) {
    auto d = true_at[static_cast<std::size_t>(b)];
    for (int i = b; i < t; ++i) d = step_dist(d, q);
    return dot(d, r);
  };

  double eta = 0.0, disc = 1.0;
  for (int t = 0; t <= H; ++t) {
    std::vector<int> starts;
    for (int b = std::max(T, t - k); b <= t - 1; ++b) starts.push_back(b);
    const auto n = static_cast<int>(starts.size());
    double expected = 0.0;
    for (int mask = 0; mask < (1 << n); ++mask) {
      const int active = __builtin_popcount(static_cast<unsigned>(mask));
      const double w = std::pow(prob, active) * std::pow(1.0 - prob, n - active);
      if (active == 0) {
        expected += w * dot(true_at[static_cast<std::size_t>(t)], r);
        continue;
      }
      double avg = 0.0;
      for (int i = 0; i < n; ++i)
        if (mask & (1 << i)) avg += branch_reward(starts[static_cast<std::size_t>(i)], t);
      expected += w * avg / active;
    }
    eta += disc * expected;
    disc *= m.gamma;
  }
  return eta + disc * dot(true_at[static_cast<std::size_t>(H) + 1], v);
}

ModelPair identical_pair(int n_states, std::uint64_t seed) {
  auto pair = random_pair(n_states, 2, 0.9, 1.0, seed);
  pair.model = pair.mdp.transition;
  return pair;
}

}  // namespace

TEST_CASE("TV distance examples") {
  VectorXd p(2), q(2);
  p << 0.5, 0.5;
  q << 1.0, 0.0;
  CHECK(tv_distance(p, p) == 0.0);
  CHECK(tv_distance(p, q) == doctest::Approx(0.5));
  VectorXd a(3), b(3);
  a << 1, 0, 0;
  b << 0, 0, 1;
  CHECK(tv_distance(a, b) == doctest::Approx(1.0));
  CHECK_THROWS_AS(tv_distance(a, p), Error);
}

TEST_CASE("epsilon_llm: identical kernels, single state, brute force") {
  const auto same = identical_pair(4, 3);
  const auto pi = envs::random_policy(4, 2, 4);
  CHECK(epsilon_llm(same, pi, 0, 20) == 0.0);

  const auto one = random_pair(1, 2, 0.9, 1.0, 5);
  CHECK(epsilon_llm(one, envs::random_policy(1, 2, 6), 0, 10) == 0.0);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto pair = random_pair(4, 2, 0.9, 1.0, seed);
    const auto pol = envs::random_policy(4, 2, seed + 50);
    for (int T : {0, 2, 7})
      CHECK(epsilon_llm(pair, pol, T, 20) == doctest::Approx(brute_epsilon(pair, pol, T, 20)).epsilon(1e-12));
  }
}

TEST_CASE("lemma: identical kernels and unreachable differences give zero") {
  const auto same = identical_pair(4, 8);
  const auto pi = envs::random_policy(4, 2, 9);
  const auto rep = lemma_b2_check(same, pi, same.mdp.initial, 15);
  for (int t = 0; t <= 15; ++t) {
    CHECK(rep.eps[static_cast<std::size_t>(t)] == 0.0);
    CHECK(rep.xi[static_cast<std::size_t>(t)] == 0.0);
  }
  CHECK(rep.holds);

  // State 2 is never reached from state 0; the model differs only there.
  auto pair = identical_pair(3, 10);
  for (auto& k : pair.mdp.transition) {
    k.row(0) << 0.5, 0.5, 0.0;
    k.row(1) << 0.3, 0.7, 0.0;
  }
  pair.model = pair.mdp.transition;
  for (auto& k : pair.model) k.row(2) << 1.0, 0.0, 0.0;
  VectorXd mu0(3);
  mu0 << 1.0, 0.0, 0.0;
  const auto unreachable = lemma_b2_check(pair, envs::random_policy(3, 2, 11), mu0, 20);
  for (int t = 0; t <= 20; ++t) {
    CHECK(unreachable.eps[static_cast<std::size_t>(t)] == 0.0);
    CHECK(unreachable.xi[static_cast<std::size_t>(t)] == 0.0);
  }
}

TEST_CASE("lemma holds on random pairs and matches an independent recomputation") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto pair = random_pair(5, 2, 0.9, 1.0, seed + 1000);
    const auto pi = envs::random_policy(5, 2, seed + 2000);
    const auto rep = lemma_b2_check(pair, pi, pair.mdp.initial, 30);
    CHECK(rep.holds);
    const MatrixXd p = marginal_kernel(pair.mdp.transition, pi);
    const MatrixXd q = marginal_kernel(pair.model, pi);
    std::vector<double> dp(pair.mdp.initial.data(), pair.mdp.initial.data() + 5), dq = dp;
    double cumulative = 0.0;
    for (int t = 1; t <= 30; ++t) {
      double xi = 0.0;
      for (int s = 0; s < 5; ++s) {
        double tv = 0.0;
        for (int x = 0; x < 5; ++x) tv += std::abs(p(s, x) - q(s, x));
        xi += dp[static_cast<std::size_t>(s)] * 0.5 * tv;
      }
      dp = step_dist(dp, p);
      dq = step_dist(dq, q);
      double eps = 0.0;
      for (int x = 0; x < 5; ++x) eps += 0.5 * std::abs(dp[static_cast<std::size_t>(x)] - dq[static_cast<std::size_t>(x)]);
      cumulative += xi;
      CHECK(std::abs(rep.eps[static_cast<std::size_t>(t)] - eps) < 1e-12);
      CHECK(std::abs(rep.xi[static_cast<std::size_t>(t)] - xi) < 1e-12);
      CHECK(eps <= cumulative + 1e-12);
    }
  }
}

TEST_CASE("multi-branch without branching is the true return") {
  const auto pair = random_pair(4, 2, 0.9, 1.0, 31);
  const auto pi = envs::random_policy(4, 2, 32);
  BranchConfig cfg;
  cfg.p = 0.0;
  cfg.k = 2;
  cfg.n_rollouts = 50000;
  cfg.seed = 1;
  const auto est = multibranch_return(pair, pi, cfg);
  CHECK(std::abs(est.eta_hat - envs::exact_return(pair.mdp, pi)) <= 3.0 * est.std_error);
  cfg.p = 0.5;
  cfg.k = 0;
  const auto none = multibranch_return(pair, pi, cfg);
  CHECK(none.eta_hat == envs::exact_return(pair.mdp, pi));
}

TEST_CASE("multi-branch with an exact model is the true return") {
  const auto pair = identical_pair(4, 33);
  const auto pi = envs::random_policy(4, 2, 34);
  for (double p : {0.2, 0.9})
    for (int k : {1, 3}) {
      BranchConfig cfg;
      cfg.p = p;
      cfg.k = k;
      cfg.T = 1;
      cfg.n_rollouts = 50000;
      cfg.seed = 7;
      const auto est = multibranch_return(pair, pi, cfg);
      CHECK(std::abs(est.eta_hat - envs::exact_return(pair.mdp, pi)) <= 3.0 * est.std_error);
    }
}

TEST_CASE("multi-branch matches exact enumeration of the branch patterns") {
  const auto pair = random_pair(3, 2, 0.9, 1.0, 41);
  const auto pi = envs::random_policy(3, 2, 42);
  BranchConfig cfg;
  cfg.p = 0.2;
  cfg.k = 2;
  cfg.T = 1;
  cfg.horizon = 40;
  cfg.n_rollouts = 200000;
  cfg.seed = 43;
  const auto est = multibranch_return(pair, pi, cfg);
  const double exact = exact_multibranch(pair, pi, 0.2, 2, 1, 40);
  CHECK(std::abs(est.eta_hat - exact) <= 3.0 * est.std_error);
  // The model really differs, so the comparison is not against the true return.
  CHECK(std::abs(exact - envs::exact_return(pair.mdp, pi)) > 10.0 * est.std_error);

  cfg.p = 0.6;
  cfg.k = 3;
  cfg.T = 0;
  cfg.horizon = 30;
  const auto est2 = multibranch_return(pair, pi, cfg);
  CHECK(std::abs(est2.eta_hat - exact_multibranch(pair, pi, 0.6, 3, 0, 30)) <= 3.0 * est2.std_error);
}

TEST_CASE("multi-branch is deterministic and independent of the worker count") {
  const auto pair = random_pair(4, 2, 0.9, 1.0, 51);
  const auto pi = envs::random_policy(4, 2, 52);
  BranchConfig cfg;
  cfg.p = 0.3;
  cfg.k = 2;
  cfg.n_rollouts = 20000;
  cfg.seed = 9;
  const auto a = multibranch_return(pair, pi, cfg);
  cfg.jobs = 4;
  const auto b = multibranch_return(pair, pi, cfg);
  CHECK(a.eta_hat == b.eta_hat);
  CHECK(a.std_error == b.std_error);
  cfg.seed = 10;
  CHECK(multibranch_return(pair, pi, cfg).eta_hat != a.eta_hat);
}

TEST_CASE("theorem check: exact model and k = 0") {
  const auto same = identical_pair(4, 61);
  const auto pi = envs::random_policy(4, 2, 62);
  BranchConfig cfg;
  cfg.p = 0.5;
  cfg.k = 3;
  cfg.n_rollouts = 20000;
  const auto rep = theorem1_check(same, pi, cfg);
  CHECK(rep.eps == 0.0);
  CHECK(rep.rhs == 0.0);
  CHECK(rep.holds);

  const auto pair = random_pair(4, 2, 0.9, 1.0, 63);
  cfg.k = 0;
  const auto zero = theorem1_check(pair, pi, cfg);
  CHECK(zero.rhs == 0.0);
  CHECK(zero.lhs == 0.0);
  CHECK(zero.holds);
}

TEST_CASE("theorem check on a few random cells") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto pair = random_pair(4, 2, 0.9, 1.0, seed + 70);
    const auto pi = envs::random_policy(4, 2, seed + 80);
    BranchConfig cfg;
    cfg.p = 0.5;
    cfg.k = 3;
    cfg.T = 2;
    cfg.n_rollouts = 20000;
    cfg.seed = seed;
    const auto rep = theorem1_check(pair, pi, cfg);
    CHECK(rep.holds);
    CHECK(rep.slack == doctest::Approx(rep.rhs - (rep.lhs - 3.0 * rep.std_error)));
  }
}

TEST_CASE("bound is monotone in its inputs") {
  const double base = theorem1_rhs(0.9, 2, 1.0, 2, 0.3, 0.2);
  CHECK(theorem1_rhs(0.9, 2, 1.0, 2, 0.4, 0.2) >= base);
  CHECK(theorem1_rhs(0.9, 2, 1.0, 3, 0.3, 0.2) >= base);
  CHECK(theorem1_rhs(0.9, 2, 1.0, 2, 0.3, 0.25) >= base);
  CHECK(theorem1_rhs(0.9, 3, 1.0, 2, 0.3, 0.2) < base);
  CHECK(base == doctest::Approx(2.0 * 0.81 / 0.1 * 4.0 * 0.3 * 0.2));
}

TEST_CASE("default horizon and argument checks") {
  const int h = default_horizon(0.9, 1.0);
  CHECK(std::pow(0.9, h) / 0.1 < 1e-4);
  CHECK(std::pow(0.9, h - 1) / 0.1 >= 1e-4);
  BranchConfig cfg;
  cfg.p = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.p = 0.5;
  cfg.n_rollouts = 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK_THROWS_AS(default_horizon(1.0, 1.0), Error);
}
