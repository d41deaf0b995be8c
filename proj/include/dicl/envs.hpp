#pragma once

#include "dicl/trajdata.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace dicl::envs {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// tabular

struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  std::vector<MatrixXd> transition;  // per action, [S x S] with rows P(.|s, a)
  MatrixXd reward;                   // [S x A]
  VectorXd initial;                  // mu0
  double gamma = 0.9;
  double r_max = 1.0;                // recorded bound on |r|

  /// Throws if any kernel row or mu0 is not a distribution (tolerance 1e-12).
  void validate() const;
};

/// pi[s, a], rows sum to one.
struct TabularPolicy {
  MatrixXd pi;
  void validate(int n_states, int n_actions) const;
};

/// Dirichlet(1) kernel rows and mu0, rewards U[0, r_max].
TabularMDP random_mdp(int n_states, int n_actions, double gamma, double r_max, std::uint64_t seed);
TabularPolicy random_policy(int n_states, int n_actions, std::uint64_t seed);
/// Kernel tensor with the same shape as `mdp`, drawn independently.
std::vector<MatrixXd> random_kernel(int n_states, int n_actions, std::uint64_t seed);

/// P^pi[s, s'] = sum_a pi[s, a] P[s, a, s'].
MatrixXd policy_transition(const TabularMDP& mdp, const TabularPolicy& policy);
MatrixXd policy_transition(const std::vector<MatrixXd>& kernel, const TabularPolicy& policy);
/// r^pi[s] = sum_a pi[s, a] r[s, a].
VectorXd policy_reward(const TabularMDP& mdp, const TabularPolicy& policy);

/// mu0^T (I - gamma P^pi)^-1 r^pi.
double exact_return(const TabularMDP& mdp, const TabularPolicy& policy);

/// Iterates V <- r^pi + gamma P^pi V until the sup-norm update is below tol.
VectorXd value_iteration(const TabularMDP& mdp, const TabularPolicy& policy, double tol = 1e-13,
                         int max_iterations = 100000);

// ---------------------------------------------------------------------------
// continuous environments

struct StepResult {
  VectorXd observation;
  double reward = 0.0;
  bool terminated = false;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual VectorXd reset(std::mt19937_64& rng) = 0;
  virtual StepResult step(const VectorXd& action) = 0;
  virtual Eigen::Index observation_dim() const = 0;
  virtual Eigen::Index action_dim() const = 0;
  virtual double action_bound() const = 0;
  virtual int episode_length() const = 0;
};

/// Frictionless pendulum with the classic-control constants and the
/// semi-implicit Euler update. theta = 0 is upright.
class PendulumEnv final : public Env {
 public:
  struct Params {
    double g = 10.0;
    double m = 1.0;
    double l = 1.0;
    double dt = 0.05;
    double max_torque = 2.0;
    double max_speed = 8.0;
    int episode_length = 200;
  };

  PendulumEnv() = default;
  explicit PendulumEnv(Params params) : params_(params) {}

  VectorXd reset(std::mt19937_64& rng) override;
  StepResult step(const VectorXd& action) override;
  Eigen::Index observation_dim() const override { return 3; }
  Eigen::Index action_dim() const override { return 1; }
  double action_bound() const override { return params_.max_torque; }
  int episode_length() const override { return params_.episode_length; }

  void set_state(double theta, double theta_dot);
  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }
  VectorXd observation() const;
  const Params& params() const { return params_; }

  /// 0.5 thdot^2 + (3 g / 2 l) cos(theta), conserved by the continuous
  /// zero-torque dynamics.
  double energy() const;

  /// Pure step on (theta, theta_dot): returns next (theta, theta_dot) and reward.
  static std::pair<Eigen::Vector2d, double> dynamics(const Params& p, const Eigen::Vector2d& state, double torque);

 private:
  Params params_{};
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
};

/// Wraps an angle to (-pi, pi].
double wrap_angle(double x);

/// s' = A s + B a + noise, reward -(|s|^2 + 0.001 |a|^2).
class LinearSystemEnv final : public Env {
 public:
  LinearSystemEnv(MatrixXd a, MatrixXd b, VectorXd initial, double noise_std = 0.0, std::uint64_t noise_seed = 0,
                  int episode_length = 1000, double action_bound = 1.0);

  VectorXd reset(std::mt19937_64& rng) override;
  StepResult step(const VectorXd& action) override;
  Eigen::Index observation_dim() const override { return a_.rows(); }
  Eigen::Index action_dim() const override { return b_.cols(); }
  double action_bound() const override { return bound_; }
  int episode_length() const override { return length_; }

  VectorXd next_state(const VectorXd& s, const VectorXd& a) const { return a_ * s + b_ * a; }
  const VectorXd& state() const { return state_; }

 private:
  MatrixXd a_, b_;
  VectorXd initial_, state_;
  double noise_std_;
  std::mt19937_64 noise_rng_;
  int length_;
  double bound_;
};

using Policy = std::function<VectorXd(const VectorXd& observation, std::mt19937_64& rng)>;

Policy uniform_random_policy(Eigen::Index action_dim, double bound);
Policy constant_policy(VectorXd action);

/// Row t holds (s_t, a_t, r_t) for t < n_steps; the env is reset whenever an
/// episode terminates or reaches its length.
trajdata::Trajectory collect_rollout(Env& env, const Policy& policy, int n_steps, std::uint64_t seed);

}  // namespace dicl::envs
