#include "dicl/rl/mlp.hpp"

#include "dicl/error.hpp"

#include <cmath>
#include <sstream>

namespace dicl::rl {

namespace {

MatrixXd activate(const MatrixXd& z, Activation act) {
  if (act == Activation::Relu) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

MatrixXd activation_grad(const MatrixXd& z, const MatrixXd& dy, Activation act) {
  if (act == Activation::Relu) return (z.array() > 0.0).select(dy, 0.0);
  return (dy.array() * (1.0 - z.array().tanh().square())).matrix();
}

}  // namespace

void Mlp::Gradients::scale(double s) {
  for (auto& m : w) m *= s;
  for (auto& v : b) v *= s;
}

void Mlp::Gradients::add(const Gradients& other, double s) {
  for (std::size_t l = 0; l < w.size(); ++l) {
    w[l] += s * other.w[l];
    b[l] += s * other.b[l];
  }
}

VectorXd Mlp::Gradients::flatten() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < w.size(); ++l) n += w[l].size() + b[l].size();
  VectorXd out(n);
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < w.size(); ++l) {
    out.segment(k, w[l].size()) = w[l].reshaped();
    k += w[l].size();
    out.segment(k, b[l].size()) = b[l].transpose();
    k += b[l].size();
  }
  return out;
}

Mlp::Mlp(std::vector<int> widths, Activation act, std::mt19937_64& rng) : widths_(std::move(widths)), act_(act) {
  require(widths_.size() >= 2, ErrorKind::InvalidArgument, "an MLP needs input and output widths");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const int in = widths_[l];
    const int out = widths_[l + 1];
    require(in >= 1 && out >= 1, ErrorKind::InvalidArgument, "layer widths must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    MatrixXd w(out, in);
    for (Eigen::Index j = 0; j < w.size(); ++j) w.data()[j] = u(rng);
    RowVectorXd b(out);
    for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = u(rng);
    w_.push_back(std::move(w));
    b_.push_back(std::move(b));
  }
  Gradients z = zero_gradients();
  mw_ = z.w;
  vw_ = z.w;
  mb_ = z.b;
  vb_ = z.b;
}

Mlp Mlp::zeros(std::vector<int> widths, Activation act) {
  std::mt19937_64 rng(0);
  Mlp net(std::move(widths), act, rng);
  for (auto& w : net.w_) w.setZero();
  for (auto& b : net.b_) b.setZero();
  return net;
}

MatrixXd Mlp::forward(const MatrixXd& x) const {
  require(x.cols() == widths_.front(), ErrorKind::InvalidArgument, "MLP input has the wrong width");
  MatrixXd h = x;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    MatrixXd z = h * w_[l].transpose();
    z.rowwise() += b_[l];
    h = (l + 1 < w_.size()) ? activate(z, act_) : std::move(z);
  }
  return h;
}

MatrixXd Mlp::forward(const MatrixXd& x, Tape& tape) const {
  require(x.cols() == widths_.front(), ErrorKind::InvalidArgument, "MLP input has the wrong width");
  tape.inputs.clear();
  tape.pre.clear();
  MatrixXd h = x;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    tape.inputs.push_back(h);
    MatrixXd z = h * w_[l].transpose();
    z.rowwise() += b_[l];
    tape.pre.push_back(z);
    h = (l + 1 < w_.size()) ? activate(z, act_) : std::move(z);
  }
  return h;
}

MatrixXd Mlp::backward(const Tape& tape, const MatrixXd& dy, Gradients* grads) const {
  require(tape.pre.size() == w_.size(), ErrorKind::InvalidArgument, "tape does not match the network");
  MatrixXd d = dy;
  for (std::size_t li = w_.size(); li-- > 0;) {
    if (li + 1 < w_.size()) d = activation_grad(tape.pre[li], d, act_);
    if (grads) {
      grads->w[li].noalias() += d.transpose() * tape.inputs[li];
      grads->b[li] += d.colwise().sum();
    }
    d = d * w_[li];
  }
  return d;
}

Mlp::Gradients Mlp::zero_gradients() const {
  Gradients g;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    g.w.push_back(MatrixXd::Zero(w_[l].rows(), w_[l].cols()));
    g.b.push_back(RowVectorXd::Zero(b_[l].size()));
  }
  return g;
}

void Mlp::adam_step(const Gradients& g, double lr, double beta1, double beta2, double eps) {
  ++step_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  auto update = [&](auto& p, const auto& grad, auto& m, auto& v) {
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double step = lr / c1;
    p.array() -= step * m.array() / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < w_.size(); ++l) {
    update(w_[l], g.w[l], mw_[l], vw_[l]);
    update(b_[l], g.b[l], mb_[l], vb_[l]);
  }
}

void Mlp::polyak_into(Mlp& target, double tau) const {
  for (std::size_t l = 0; l < w_.size(); ++l) {
    target.w_[l] = tau * w_[l] + (1.0 - tau) * target.w_[l];
    target.b_[l] = tau * b_[l] + (1.0 - tau) * target.b_[l];
  }
}

VectorXd Mlp::flat_parameters() const {
  Gradients g{w_, b_};
  return g.flatten();
}

void Mlp::set_flat_parameters(const VectorXd& theta) {
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    require(k + w_[l].size() + b_[l].size() <= theta.size(), ErrorKind::InvalidArgument, "parameter vector too short");
    w_[l].reshaped() = theta.segment(k, w_[l].size());
    k += w_[l].size();
    b_[l] = theta.segment(k, b_[l].size()).transpose();
    k += b_[l].size();
  }
  require(k == theta.size(), ErrorKind::InvalidArgument, "parameter vector too long");
}

bool Mlp::finite() const {
  for (std::size_t l = 0; l < w_.size(); ++l)
    if (!w_[l].allFinite() || !b_[l].allFinite()) return false;
  return true;
}

double train_step(Mlp& net, const LossFunction& loss, double lr) {
  auto grads = net.zero_gradients();
  const double value = loss(net, &grads);
  const VectorXd flat = grads.flatten();
  if (!std::isfinite(value) || !flat.allFinite()) {
    std::ostringstream os;
    os << "non-finite training step: loss=" << value << " grad_norm=" << flat.norm() << " after "
       << net.adam_steps() << " updates";
    fail(ErrorKind::Numerical, os.str());
  }
  net.adam_step(grads, lr);
  return value;
}

double mse_loss(const Mlp& net, const MatrixXd& x, const MatrixXd& y, Mlp::Gradients* grads) {
  Mlp::Tape tape;
  const MatrixXd out = net.forward(x, tape);
  require(out.rows() == y.rows() && out.cols() == y.cols(), ErrorKind::InvalidArgument, "target has the wrong shape");
  const MatrixXd diff = out - y;
  const auto n = static_cast<double>(diff.size());
  if (grads) net.backward(tape, (2.0 / n) * diff, grads);
  return diff.squaredNorm() / n;
}

double mlp_train_step(Mlp& net, const MatrixXd& x, const MatrixXd& y, double lr) {
  return train_step(net, [&](const Mlp& m, Mlp::Gradients* g) { return mse_loss(m, x, y, g); }, lr);
}

VectorXd finite_difference_gradient(const Mlp& net, const LossFunction& loss, double h) {
  Mlp probe = net;
  const VectorXd theta = net.flat_parameters();
  VectorXd out(theta.size());
  VectorXd t = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    t(i) = theta(i) + h;
    probe.set_flat_parameters(t);
    const double up = loss(probe, nullptr);
    t(i) = theta(i) - h;
    probe.set_flat_parameters(t);
    const double down = loss(probe, nullptr);
    t(i) = theta(i);
    out(i) = (up - down) / (2.0 * h);
  }
  return out;
}

}  // namespace dicl::rl
