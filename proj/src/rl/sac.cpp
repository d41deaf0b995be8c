#include "dicl/rl/sac.hpp"

#include "dicl/error.hpp"

#include <cmath>
#include <numbers>

namespace dicl::rl {

namespace {

constexpr double kLogStdHalfRange = 0.5 * (kLogStdMax - kLogStdMin);
constexpr double kSquashEps = 1e-6;

MatrixXd concat(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd x(a.rows(), a.cols() + b.cols());
  x << a, b;
  return x;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) fail(ErrorKind::Numerical, std::string("non-finite ") + what);
}

}  // namespace

void SacConfig::validate() const {
  require(gamma >= 0.0 && gamma < 1.0, ErrorKind::Config, "gamma must lie in [0, 1)");
  require(tau > 0.0 && tau <= 1.0, ErrorKind::Config, "tau must lie in (0, 1]");
  require(policy_lr > 0.0 && q_lr > 0.0, ErrorKind::Config, "learning rates must be positive");
  require(policy_frequency >= 1 && target_network_frequency >= 1, ErrorKind::Config, "frequencies must be >= 1");
  require(hidden >= 1, ErrorKind::Config, "hidden width must be positive");
}

MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd m(rows, cols);
  // Row-major fill so a batch draws its noise sample by sample.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = n(rng);
  return m;
}

ActorSample sample_actor(const Mlp& actor, const MatrixXd& obs, const MatrixXd& noise, double scale) {
  ActorSample s;
  s.raw = actor.forward(obs, s.tape);
  const auto a = s.raw.cols() / 2;
  require(noise.rows() == obs.rows() && noise.cols() == a, ErrorKind::InvalidArgument, "noise has the wrong shape");
  const MatrixXd mean = s.raw.leftCols(a);
  const MatrixXd log_std =
      (kLogStdMin + kLogStdHalfRange * (s.raw.rightCols(a).array().tanh() + 1.0)).matrix();
  s.std = log_std.array().exp().matrix();
  s.noise = noise;
  const MatrixXd u = mean + s.std.cwiseProduct(noise);
  s.squashed = u.array().tanh().matrix();
  s.action = scale * s.squashed;
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const auto jac = (scale * (1.0 - s.squashed.array().square()) + kSquashEps).log();
  s.log_prob = (-0.5 * noise.array().square() - log_std.array() - half_log_2pi - jac).rowwise().sum().matrix();
  return s;
}

MatrixXd actor_mean_action(const Mlp& actor, const MatrixXd& obs, double scale) {
  const MatrixXd raw = actor.forward(obs);
  return scale * raw.leftCols(raw.cols() / 2).array().tanh().matrix();
}

double sac_critic_loss(const Mlp& q1, const Mlp& q2, const MatrixXd& obs, const MatrixXd& actions,
                       const VectorXd& targets, Mlp::Gradients* g1, Mlp::Gradients* g2, double* loss1, double* loss2) {
  const MatrixXd x = concat(obs, actions);
  const auto n = static_cast<double>(obs.rows());
  Mlp::Tape t1, t2;
  const MatrixXd d1 = q1.forward(x, t1).col(0) - targets;
  const MatrixXd d2 = q2.forward(x, t2).col(0) - targets;
  if (g1) q1.backward(t1, (2.0 / n) * d1, g1);
  if (g2) q2.backward(t2, (2.0 / n) * d2, g2);
  const double l1 = d1.squaredNorm() / n;
  const double l2 = d2.squaredNorm() / n;
  if (loss1) *loss1 = l1;
  if (loss2) *loss2 = l2;
  return l1 + l2;
}

double sac_actor_loss(const Mlp& actor, const Mlp& q1, const Mlp& q2, double alpha, const MatrixXd& obs,
                      const MatrixXd& noise, double scale, Mlp::Gradients* grads, VectorXd* log_prob) {
  const ActorSample s = sample_actor(actor, obs, noise, scale);
  const auto n = static_cast<double>(obs.rows());
  const auto a = s.action.cols();
  const MatrixXd x = concat(obs, s.action);
  Mlp::Tape t1, t2;
  const VectorXd v1 = q1.forward(x, t1).col(0);
  const VectorXd v2 = q2.forward(x, t2).col(0);
  const VectorXd qmin = v1.cwiseMin(v2);
  const double loss = (alpha * s.log_prob - qmin).mean();
  if (log_prob) *log_prob = s.log_prob;
  if (!grads) return loss;

  // dL/d(action) through whichever critic attains the minimum.
  MatrixXd dy1 = MatrixXd::Zero(obs.rows(), 1);
  MatrixXd dy2 = MatrixXd::Zero(obs.rows(), 1);
  for (Eigen::Index r = 0; r < obs.rows(); ++r) (v1(r) <= v2(r) ? dy1 : dy2)(r, 0) = -1.0 / n;
  const MatrixXd d_action = q1.backward(t1, dy1, nullptr).rightCols(a) + q2.backward(t2, dy2, nullptr).rightCols(a);

  const auto t = s.squashed.array();
  const auto one_minus = 1.0 - t.square();
  const MatrixXd dlogp_du = (2.0 * scale * t * one_minus / (scale * one_minus + kSquashEps)).matrix();
  const MatrixXd du = (alpha / n) * dlogp_du + (d_action.array() * scale * one_minus).matrix();
  const MatrixXd dlog_std = (du.array() * s.std.array() * s.noise.array() - alpha / n).matrix();
  const auto lsr = s.raw.rightCols(a).array().tanh();
  MatrixXd d_raw(obs.rows(), 2 * a);
  d_raw.leftCols(a) = du;
  d_raw.rightCols(a) = (dlog_std.array() * kLogStdHalfRange * (1.0 - lsr.square())).matrix();
  actor.backward(s.tape, d_raw, grads);
  return loss;
}

VectorXd sac_targets(const Mlp& actor, const Mlp& q1_target, const Mlp& q2_target, double alpha, double gamma,
                     const Batch& batch, const MatrixXd& noise, double scale) {
  const ActorSample next = sample_actor(actor, batch.next_obs, noise, scale);
  const MatrixXd x = concat(batch.next_obs, next.action);
  const VectorXd qmin = q1_target.forward(x).col(0).cwiseMin(q2_target.forward(x).col(0));
  const VectorXd soft = qmin - alpha * next.log_prob;
  return batch.rewards + gamma * (1.0 - batch.dones.array()).matrix().cwiseProduct(soft);
}

SacAgent::SacAgent(Eigen::Index obs_dim, Eigen::Index action_dim, double action_scale, SacConfig cfg,
                   std::uint64_t seed)
    : cfg_(cfg), obs_dim_(obs_dim), action_dim_(action_dim), scale_(action_scale) {
  cfg_.validate();
  require(obs_dim >= 1 && action_dim >= 1, ErrorKind::InvalidArgument, "SAC needs positive dimensions");
  std::mt19937_64 rng(seed);
  const int h = cfg_.hidden;
  const int o = static_cast<int>(obs_dim);
  const int a = static_cast<int>(action_dim);
  actor_ = Mlp({o, h, h, 2 * a}, Activation::Relu, rng);
  q1_ = Mlp({o + a, h, h, 1}, Activation::Relu, rng);
  q2_ = Mlp({o + a, h, h, 1}, Activation::Relu, rng);
  q1_target_ = q1_;
  q2_target_ = q2_;
  target_entropy_ = -static_cast<double>(action_dim);
  log_alpha_ = cfg_.autotune ? 0.0 : std::log(cfg_.alpha);
}

double SacAgent::alpha() const { return std::exp(log_alpha_); }

VectorXd SacAgent::act(const VectorXd& obs, std::mt19937_64& rng) const {
  const MatrixXd noise = normal_matrix(1, action_dim_, rng);
  return sample_actor(actor_, obs.transpose(), noise, scale_).action.row(0).transpose();
}

VectorXd SacAgent::act_deterministic(const VectorXd& obs) const {
  return actor_mean_action(actor_, obs.transpose(), scale_).row(0).transpose();
}

SacLosses SacAgent::update(const Batch& batch, const Batch* extra, double extra_weight, std::mt19937_64& rng) {
  SacLosses out;
  const double alpha = this->alpha();

  // Critics.
  auto g1 = q1_.zero_gradients();
  auto g2 = q2_.zero_gradients();
  {
    const MatrixXd noise = normal_matrix(batch.size(), action_dim_, rng);
    const VectorXd y = sac_targets(actor_, q1_target_, q2_target_, alpha, cfg_.gamma, batch, noise, scale_);
    sac_critic_loss(q1_, q2_, batch.obs, batch.actions, y, &g1, &g2, &out.qf1, &out.qf2);
  }
  if (extra) {
    const MatrixXd noise = normal_matrix(extra->size(), action_dim_, rng);
    const VectorXd y = sac_targets(actor_, q1_target_, q2_target_, alpha, cfg_.gamma, *extra, noise, scale_);
    auto e1 = q1_.zero_gradients();
    auto e2 = q2_.zero_gradients();
    double l1 = 0.0, l2 = 0.0;
    sac_critic_loss(q1_, q2_, extra->obs, extra->actions, y, &e1, &e2, &l1, &l2);
    g1.add(e1, extra_weight);
    g2.add(e2, extra_weight);
    out.qf1 += extra_weight * l1;
    out.qf2 += extra_weight * l2;
  }
  check_finite(out.qf1 + out.qf2, "critic loss");
  q1_.adam_step(g1, cfg_.q_lr);
  q2_.adam_step(g2, cfg_.q_lr);

  // Delayed actor and temperature, repeated to keep the update ratio.
  if (updates_ % cfg_.policy_frequency == 0) {
    out.actor_updated = true;
    for (int j = 0; j < cfg_.policy_frequency; ++j) {
      const double a_now = this->alpha();
      auto ga = actor_.zero_gradients();
      out.actor = sac_actor_loss(actor_, q1_, q2_, a_now, batch.obs, normal_matrix(batch.size(), action_dim_, rng),
                                 scale_, &ga);
      if (extra) {
        auto ge = actor_.zero_gradients();
        const double le = sac_actor_loss(actor_, q1_, q2_, a_now, extra->obs,
                                         normal_matrix(extra->size(), action_dim_, rng), scale_, &ge);
        ga.add(ge, extra_weight);
        out.actor += extra_weight * le;
      }
      check_finite(out.actor, "actor loss");
      actor_.adam_step(ga, cfg_.policy_lr);

      if (cfg_.autotune) {
        const ActorSample s = sample_actor(actor_, batch.obs, normal_matrix(batch.size(), action_dim_, rng), scale_);
        double entropy_gap = (s.log_prob.array() + target_entropy_).mean();
        double loss = -a_now * entropy_gap;
        if (extra) {
          const ActorSample se =
              sample_actor(actor_, extra->obs, normal_matrix(extra->size(), action_dim_, rng), scale_);
          const double gap_e = (se.log_prob.array() + target_entropy_).mean();
          entropy_gap += extra_weight * gap_e;
          loss += -a_now * extra_weight * gap_e;
        }
        check_finite(loss, "temperature loss");
        out.alpha_loss = loss;
        // d/d(log alpha) of -alpha * gap.
        const double grad = -a_now * entropy_gap;
        ++a_step_;
        a_m_ = 0.9 * a_m_ + 0.1 * grad;
        a_v_ = 0.999 * a_v_ + 0.001 * grad * grad;
        const double c1 = 1.0 - std::pow(0.9, static_cast<double>(a_step_));
        const double c2 = 1.0 - std::pow(0.999, static_cast<double>(a_step_));
        log_alpha_ -= cfg_.q_lr / c1 * a_m_ / (std::sqrt(a_v_ / c2) + 1e-8);
      }
    }
  }

  if (updates_ % cfg_.target_network_frequency == 0) {
    q1_.polyak_into(q1_target_, cfg_.tau);
    q2_.polyak_into(q2_target_, cfg_.tau);
  }
  ++updates_;
  out.alpha = this->alpha();
  return out;
}

}  // namespace dicl::rl
