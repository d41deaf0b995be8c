#include "dicl/rl/dynamics.hpp"

#include "dicl/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dicl::rl {

namespace {

void fit_standardizer(const MatrixXd& x, RowVectorXd& mean, RowVectorXd& scale) {
  mean = x.colwise().mean();
  scale = ((x.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
  for (Eigen::Index j = 0; j < scale.size(); ++j)
    if (!(scale(j) > 1e-12)) scale(j) = 1.0;
}

MatrixXd rows_of(const MatrixXd& m, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
  MatrixXd out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Eigen::Index>(i - begin)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

}  // namespace

MatrixXd MlpDynamicsModel::predict(const MatrixXd& states, const MatrixXd& actions) const {
  MatrixXd x(states.rows(), states.cols() + actions.cols());
  x << states, actions;
  const MatrixXd z = (x.rowwise() - in_mean_).array().rowwise() / in_scale_.array();
  const MatrixXd y = net_.forward(z);
  return (y.array().rowwise() * out_scale_.array()).rowwise() + out_mean_.array();
}

VectorXd MlpDynamicsModel::predict(const VectorXd& state, const VectorXd& action) const {
  return predict(MatrixXd(state.transpose()), MatrixXd(action.transpose())).row(0).transpose();
}

double MlpDynamicsModel::scaled_mse(const MatrixXd& states, const MatrixXd& actions, const MatrixXd& next) const {
  const MatrixXd diff = (predict(states, actions) - next).array().rowwise() / out_scale_.array();
  return diff.squaredNorm() / static_cast<double>(diff.size());
}

MlpDynamicsModel mlp_dynamics_baseline(const trajdata::Trajectory& context, const DynamicsOptions& opt) {
  context.validate();
  require(context.actions.has_value(), ErrorKind::InvalidArgument, "the dynamics baseline needs actions");
  const auto n = context.length() - 1;
  require(n >= 10, ErrorKind::InvalidArgument,
          "the dynamics baseline needs at least 10 transitions for a validation split, got " + std::to_string(std::max<Eigen::Index>(n, 0)));
  require(opt.epochs >= 1 && opt.batch_size >= 1 && opt.patience >= 1 && opt.hidden_layers >= 1 && opt.hidden >= 1,
          ErrorKind::InvalidArgument, "invalid dynamics baseline options");
  require(opt.validation_fraction > 0.0 && opt.validation_fraction < 1.0, ErrorKind::InvalidArgument,
          "validation fraction must lie in (0, 1)");

  const auto ds = context.states.cols();
  MatrixXd x(n, ds + context.actions->cols());
  x << context.states.topRows(n), context.actions->topRows(n);
  const MatrixXd y = context.states.bottomRows(n);

  MlpDynamicsModel model;
  fit_standardizer(x, model.in_mean_, model.in_scale_);
  fit_standardizer(y, model.out_mean_, model.out_scale_);
  const MatrixXd xs = (x.rowwise() - model.in_mean_).array().rowwise() / model.in_scale_.array();
  const MatrixXd ys = (y.rowwise() - model.out_mean_).array().rowwise() / model.out_scale_.array();

  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(opt.validation_fraction * static_cast<double>(n))));
  const std::size_t n_train = order.size() - n_val;
  model.val_idx_.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  const MatrixXd xv = rows_of(xs, order, n_train, order.size());
  const MatrixXd yv = rows_of(ys, order, n_train, order.size());

  std::vector<int> widths{static_cast<int>(x.cols())};
  for (int l = 0; l < opt.hidden_layers; ++l) widths.push_back(opt.hidden);
  widths.push_back(static_cast<int>(ds));
  model.net_ = Mlp(widths, Activation::Relu, rng);

  Mlp best = model.net_;
  double best_val = mse_loss(model.net_, xv, yv, nullptr);
  int since_best = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < train.size(); b += static_cast<std::size_t>(opt.batch_size)) {
      const std::size_t e = std::min(train.size(), b + static_cast<std::size_t>(opt.batch_size));
      const MatrixXd xb = rows_of(xs, train, b, e);
      const MatrixXd yb = rows_of(ys, train, b, e);
      epoch_loss += mlp_train_step(model.net_, xb, yb, opt.lr) * static_cast<double>(e - b);
    }
    model.train_loss_.push_back(epoch_loss / static_cast<double>(train.size()));
    const double val = mse_loss(model.net_, xv, yv, nullptr);
    model.val_loss_.push_back(val);
    // Relative tolerance so a converged plateau counts as no improvement.
    if (val < best_val * (1.0 - 1e-4) - 1e-12) {
      best_val = val;
      best = model.net_;
      since_best = 0;
    } else if (++since_best >= opt.patience) {
      model.stopped_early_ = true;
      break;
    }
  }
  model.net_ = std::move(best);
  model.best_val_ = best_val;
  return model;
}

}  // namespace dicl::rl
