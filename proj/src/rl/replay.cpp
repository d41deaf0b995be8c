#include "dicl/rl/replay.hpp"

#include "dicl/error.hpp"

namespace dicl::rl {

ReplayBuffer::ReplayBuffer(std::size_t capacity, Eigen::Index obs_dim, Eigen::Index action_dim)
    : capacity_(capacity),
      obs_(static_cast<Eigen::Index>(capacity), obs_dim),
      actions_(static_cast<Eigen::Index>(capacity), action_dim),
      next_obs_(static_cast<Eigen::Index>(capacity), obs_dim),
      rewards_(static_cast<Eigen::Index>(capacity)),
      dones_(static_cast<Eigen::Index>(capacity)) {
  require(capacity >= 1, ErrorKind::InvalidArgument, "replay capacity must be positive");
}

std::size_t ReplayBuffer::add(const VectorXd& obs, const VectorXd& action, double reward, const VectorXd& next_obs,
                              bool done) {
  require(obs.size() == obs_.cols() && next_obs.size() == obs_.cols(), ErrorKind::InvalidArgument,
          "observation has the wrong dimension");
  require(action.size() == actions_.cols(), ErrorKind::InvalidArgument, "action has the wrong dimension");
  const auto i = static_cast<Eigen::Index>(cursor_);
  obs_.row(i) = obs.transpose();
  actions_.row(i) = action.transpose();
  rewards_(i) = reward;
  next_obs_.row(i) = next_obs.transpose();
  dones_(i) = done ? 1.0 : 0.0;
  const std::size_t slot = cursor_;
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
  ++inserted_;
  return slot;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, std::mt19937_64& rng) const {
  require(size_ > 0, ErrorKind::InvalidArgument, "cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> u(0, size_ - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = u(rng);
  return idx;
}

Batch ReplayBuffer::gather(const std::vector<std::size_t>& indices) const {
  const auto n = static_cast<Eigen::Index>(indices.size());
  Batch b{MatrixXd(n, obs_.cols()), MatrixXd(n, actions_.cols()), VectorXd(n), MatrixXd(n, obs_.cols()), VectorXd(n)};
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(r)]);
    require(static_cast<std::size_t>(i) < size_, ErrorKind::InvalidArgument, "replay index outside the filled region");
    b.obs.row(r) = obs_.row(i);
    b.actions.row(r) = actions_.row(i);
    b.rewards(r) = rewards_(i);
    b.next_obs.row(r) = next_obs_.row(i);
    b.dones(r) = dones_(i);
  }
  return b;
}

std::size_t LlmReplayBuffer::add(const VectorXd& obs, const VectorXd& action, double reward, const VectorXd& next_obs,
                                 bool done, const Audit& audit) {
  const std::size_t slot = ReplayBuffer::add(obs, action, reward, next_obs, done);
  if (audit_.size() < capacity())
    audit_.push_back(audit);
  else
    audit_[slot] = audit;
  return slot;
}

}  // namespace dicl::rl
