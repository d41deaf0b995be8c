#pragma once

#include "dicl/rl/mlp.hpp"
#include "dicl/trajdata.hpp"

#include <cstdint>
#include <vector>

namespace dicl::rl {

struct DynamicsOptions {
  int hidden = 128;
  int hidden_layers = 4;
  int epochs = 150;
  int batch_size = 64;
  double lr = 1e-3;
  double validation_fraction = 0.1;
  int patience = 10;
  std::uint64_t seed = 0;
};

/// One-step model s_{t+1} = f(s_t, a_t) on standardised inputs and targets.
class MlpDynamicsModel {
 public:
  MatrixXd predict(const MatrixXd& states, const MatrixXd& actions) const;
  VectorXd predict(const VectorXd& state, const VectorXd& action) const;

  /// Mean squared error in the standardised target space.
  double scaled_mse(const MatrixXd& states, const MatrixXd& actions, const MatrixXd& next_states) const;

  const std::vector<double>& train_history() const { return train_loss_; }
  const std::vector<double>& validation_history() const { return val_loss_; }
  int epochs_run() const { return static_cast<int>(val_loss_.size()); }
  bool stopped_early() const { return stopped_early_; }
  double best_validation_loss() const { return best_val_; }
  const std::vector<std::size_t>& validation_indices() const { return val_idx_; }

 private:
  friend MlpDynamicsModel mlp_dynamics_baseline(const trajdata::Trajectory&, const DynamicsOptions&);
  Mlp net_;
  RowVectorXd in_mean_, in_scale_, out_mean_, out_scale_;
  std::vector<double> train_loss_, val_loss_;
  std::vector<std::size_t> val_idx_;
  double best_val_ = 0.0;
  bool stopped_early_ = false;
};

/// Fits on the transitions (s_t, a_t) -> s_{t+1} of one trajectory, holding out
/// a random validation split and keeping the best-validation weights. Refuses
/// fewer than 10 transitions.
MlpDynamicsModel mlp_dynamics_baseline(const trajdata::Trajectory& context, const DynamicsOptions& options = {});

}  // namespace dicl::rl
