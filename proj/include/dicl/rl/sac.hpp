#pragma once

#include "dicl/rl/mlp.hpp"
#include "dicl/rl/replay.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>

namespace dicl::rl {

struct SacConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double policy_lr = 3e-4;
  double q_lr = 1e-3;
  int policy_frequency = 2;
  int target_network_frequency = 1;
  bool autotune = true;
  double alpha = 0.2;  // used when autotune is off
  int hidden = 256;

  void validate() const;
};

struct SacLosses {
  double qf1 = 0.0;
  double qf2 = 0.0;
  double actor = 0.0;
  double alpha = 0.0;
  double alpha_loss = 0.0;
  bool actor_updated = false;
};

// Squashed-Gaussian policy head. The actor emits [mean | raw log-std]; the
// log-std is mapped into [kLogStdMin, kLogStdMax] through tanh.
inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

struct ActorSample {
  MatrixXd action;    // scaled to the action bound
  VectorXd log_prob;  // per row
  // Intermediates kept for the backward pass.
  MatrixXd raw, squashed, std, noise;
  Mlp::Tape tape;
};

/// Reparameterised draw with explicit standard-normal `noise` [n x d_a].
ActorSample sample_actor(const Mlp& actor, const MatrixXd& obs, const MatrixXd& noise, double action_scale);

/// Deterministic action tanh(mean) * scale.
MatrixXd actor_mean_action(const Mlp& actor, const MatrixXd& obs, double action_scale);

/// Sum of both critics' mean squared TD errors against fixed targets.
double sac_critic_loss(const Mlp& q1, const Mlp& q2, const MatrixXd& obs, const MatrixXd& actions,
                       const VectorXd& targets, Mlp::Gradients* g1, Mlp::Gradients* g2, double* loss1 = nullptr,
                       double* loss2 = nullptr);

/// mean(alpha log pi(a|s) - min(Q1, Q2)(s, a)) with a reparameterised by `noise`.
double sac_actor_loss(const Mlp& actor, const Mlp& q1, const Mlp& q2, double alpha, const MatrixXd& obs,
                      const MatrixXd& noise, double action_scale, Mlp::Gradients* grads,
                      VectorXd* log_prob = nullptr);

/// Soft TD targets r + gamma (1 - d)(min Q'(s', a') - alpha log pi(a'|s')).
VectorXd sac_targets(const Mlp& actor, const Mlp& q1_target, const Mlp& q2_target, double alpha, double gamma,
                     const Batch& batch, const MatrixXd& noise, double action_scale);

class SacAgent {
 public:
  SacAgent(Eigen::Index obs_dim, Eigen::Index action_dim, double action_scale, SacConfig cfg, std::uint64_t seed);

  VectorXd act(const VectorXd& obs, std::mt19937_64& rng) const;
  VectorXd act_deterministic(const VectorXd& obs) const;

  /// One gradient step on `batch`. When `extra` is given its losses are added
  /// with weight `extra_weight` before each optimiser step; noise for `batch`
  /// is always drawn first, so a missing `extra` leaves the stream untouched.
  SacLosses update(const Batch& batch, const Batch* extra, double extra_weight, std::mt19937_64& rng);

  double alpha() const;
  long updates() const { return updates_; }
  const SacConfig& config() const { return cfg_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& q1() const { return q1_; }
  const Mlp& q2() const { return q2_; }
  double log_alpha() const { return log_alpha_; }
  Eigen::Index action_dim() const { return action_dim_; }

 private:
  SacConfig cfg_;
  Eigen::Index obs_dim_, action_dim_;
  double scale_;
  Mlp actor_, q1_, q2_, q1_target_, q2_target_;
  double log_alpha_ = 0.0;
  double target_entropy_;
  // Adam state for log_alpha.
  double a_m_ = 0.0, a_v_ = 0.0;
  long a_step_ = 0;
  long updates_ = 0;
};

MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

}  // namespace dicl::rl
