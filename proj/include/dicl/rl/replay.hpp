#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace dicl::rl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Batch {
  MatrixXd obs;
  MatrixXd actions;
  VectorXd rewards;
  MatrixXd next_obs;
  VectorXd dones;

  Eigen::Index size() const { return obs.rows(); }
};

/// Fixed-capacity ring of transitions. Sampling is uniform with replacement
/// over the filled slots.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, Eigen::Index obs_dim, Eigen::Index action_dim);

  /// Returns the slot written.
  std::size_t add(const VectorXd& obs, const VectorXd& action, double reward, const VectorXd& next_obs, bool done);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t cursor() const { return cursor_; }
  /// Total transitions ever inserted.
  std::size_t inserted() const { return inserted_; }

  std::vector<std::size_t> sample_indices(std::size_t n, std::mt19937_64& rng) const;
  Batch gather(const std::vector<std::size_t>& indices) const;
  Batch sample(std::size_t n, std::mt19937_64& rng) const { return gather(sample_indices(n, rng)); }

  VectorXd obs(std::size_t slot) const { return obs_.row(static_cast<Eigen::Index>(slot)).transpose(); }
  VectorXd action(std::size_t slot) const { return actions_.row(static_cast<Eigen::Index>(slot)).transpose(); }
  double reward(std::size_t slot) const { return rewards_(static_cast<Eigen::Index>(slot)); }
  VectorXd next_obs(std::size_t slot) const { return next_obs_.row(static_cast<Eigen::Index>(slot)).transpose(); }
  bool done(std::size_t slot) const { return dones_(static_cast<Eigen::Index>(slot)) != 0.0; }

 private:
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
  std::size_t inserted_ = 0;
  MatrixXd obs_, actions_, next_obs_;
  VectorXd rewards_, dones_;
};

/// Synthetic transitions plus the bookkeeping needed to audit them.
class LlmReplayBuffer : public ReplayBuffer {
 public:
  struct Audit {
    std::size_t state_step = 0;   // env step at which the context state s_i was observed
    std::size_t action_step = 0;  // env step at which the auxiliary action was drawn
    std::size_t context_index = 0;  // i within the sampled trajectory
  };

  using ReplayBuffer::ReplayBuffer;

  std::size_t add(const VectorXd& obs, const VectorXd& action, double reward, const VectorXd& next_obs, bool done,
                  const Audit& audit);

  const std::vector<Audit>& audit() const { return audit_; }

 private:
  std::vector<Audit> audit_;
};

}  // namespace dicl::rl
