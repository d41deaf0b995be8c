#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace dicl::rl {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

enum class Activation { Relu, Tanh };

/// Dense network on row-major batches: x is [n x in], output [n x out]. Hidden
/// layers apply the activation, the last layer is affine.
class Mlp {
 public:
  struct Tape {
    std::vector<MatrixXd> inputs;  // input to each layer
    std::vector<MatrixXd> pre;     // pre-activation of each layer
  };

  struct Gradients {
    std::vector<MatrixXd> w;
    std::vector<RowVectorXd> b;

    void scale(double s);
    void add(const Gradients& other, double s = 1.0);
    VectorXd flatten() const;
  };

  Mlp() = default;
  /// PyTorch-style init: weights and biases U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Mlp(std::vector<int> widths, Activation act, std::mt19937_64& rng);
  static Mlp zeros(std::vector<int> widths, Activation act);

  MatrixXd forward(const MatrixXd& x) const;
  MatrixXd forward(const MatrixXd& x, Tape& tape) const;
  /// Accumulates parameter gradients into `grads` (if non-null) and returns dL/dx.
  MatrixXd backward(const Tape& tape, const MatrixXd& dy, Gradients* grads) const;

  Gradients zero_gradients() const;

  /// Adam step with PyTorch's bias correction.
  void adam_step(const Gradients& grads, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  long adam_steps() const { return step_; }

  /// target <- tau * this + (1 - tau) * target.
  void polyak_into(Mlp& target, double tau) const;

  VectorXd flat_parameters() const;
  void set_flat_parameters(const VectorXd& theta);
  bool finite() const;

  const std::vector<int>& widths() const { return widths_; }
  Activation activation() const { return act_; }
  std::vector<MatrixXd>& weights() { return w_; }
  std::vector<RowVectorXd>& biases() { return b_; }
  const std::vector<MatrixXd>& weights() const { return w_; }
  const std::vector<RowVectorXd>& biases() const { return b_; }

 private:
  std::vector<int> widths_;
  Activation act_ = Activation::Relu;
  std::vector<MatrixXd> w_;  // [out x in]
  std::vector<RowVectorXd> b_;
  std::vector<MatrixXd> mw_, vw_;
  std::vector<RowVectorXd> mb_, vb_;
  long step_ = 0;
};

/// Returns the loss and fills `grads` (already zeroed) with its gradient.
using LossFunction = std::function<double(const Mlp& net, Mlp::Gradients* grads)>;

/// One Adam update on `loss`. Throws a Numerical error if the loss or the
/// gradient is not finite.
double train_step(Mlp& net, const LossFunction& loss, double lr);

/// Mean over all entries of (net(x) - y)^2.
double mse_loss(const Mlp& net, const MatrixXd& x, const MatrixXd& y, Mlp::Gradients* grads);

/// Convenience: one Adam step on mse_loss.
double mlp_train_step(Mlp& net, const MatrixXd& x, const MatrixXd& y, double lr);

/// Central differences of `loss` with respect to the flat parameters.
VectorXd finite_difference_gradient(const Mlp& net, const LossFunction& loss, double h = 1e-6);

}  // namespace dicl::rl
