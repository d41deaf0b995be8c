#include "dicl/envs.hpp"

#include "dicl/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dicl::envs {

namespace {

VectorXd dirichlet_ones(int n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = e(rng);
  return v / v.sum();
}

void check_distribution(const VectorXd& v, const std::string& what) {
  require((v.array() >= 0.0).all(), ErrorKind::InvalidArgument, what + " has negative entries");
  require(std::abs(v.sum() - 1.0) <= 1e-12, ErrorKind::InvalidArgument, what + " does not sum to one");
}

}  // namespace

void TabularMDP::validate() const {
  require(n_states >= 1 && n_actions >= 1, ErrorKind::InvalidArgument, "MDP needs at least one state and action");
  require(static_cast<int>(transition.size()) == n_actions, ErrorKind::InvalidArgument, "one kernel per action");
  for (int a = 0; a < n_actions; ++a) {
    require(transition[static_cast<std::size_t>(a)].rows() == n_states &&
                transition[static_cast<std::size_t>(a)].cols() == n_states,
            ErrorKind::InvalidArgument, "kernel must be S x S");
    for (int s = 0; s < n_states; ++s)
      check_distribution(transition[static_cast<std::size_t>(a)].row(s).transpose(), "kernel row");
  }
  require(reward.rows() == n_states && reward.cols() == n_actions, ErrorKind::InvalidArgument, "reward must be S x A");
  require(reward.cwiseAbs().maxCoeff() <= r_max + 1e-12, ErrorKind::InvalidArgument, "reward exceeds r_max");
  require(initial.size() == n_states, ErrorKind::InvalidArgument, "mu0 must have S entries");
  check_distribution(initial, "mu0");
  require(gamma >= 0.0 && gamma < 1.0, ErrorKind::InvalidArgument, "gamma must lie in [0, 1)");
}

void TabularPolicy::validate(int n_states, int n_actions) const {
  require(pi.rows() == n_states && pi.cols() == n_actions, ErrorKind::InvalidArgument, "policy must be S x A");
  for (int s = 0; s < n_states; ++s) check_distribution(pi.row(s).transpose(), "policy row");
}

std::vector<MatrixXd> random_kernel(int n_states, int n_actions, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<MatrixXd> kernel(static_cast<std::size_t>(n_actions), MatrixXd(n_states, n_states));
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) kernel[static_cast<std::size_t>(a)].row(s) = dirichlet_ones(n_states, rng).transpose();
  return kernel;
}

TabularMDP random_mdp(int n_states, int n_actions, double gamma, double r_max, std::uint64_t seed) {
  TabularMDP m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  m.r_max = r_max;
  m.transition = random_kernel(n_states, n_actions, seed);
  std::mt19937_64 rng(seed ^ 0xA5A5A5A5ULL);
  std::uniform_real_distribution<double> u(0.0, r_max);
  m.reward.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) m.reward(s, a) = u(rng);
  m.initial = dirichlet_ones(n_states, rng);
  m.validate();
  return m;
}

TabularPolicy random_policy(int n_states, int n_actions, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TabularPolicy p;
  p.pi.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) p.pi.row(s) = dirichlet_ones(n_actions, rng).transpose();
  return p;
}

MatrixXd policy_transition(const std::vector<MatrixXd>& kernel, const TabularPolicy& policy) {
  require(!kernel.empty(), ErrorKind::InvalidArgument, "empty kernel");
  const auto n = kernel.front().rows();
  require(policy.pi.rows() == n && policy.pi.cols() == static_cast<Eigen::Index>(kernel.size()),
          ErrorKind::InvalidArgument, "policy shape does not match the kernel");
  MatrixXd p = MatrixXd::Zero(n, n);
  for (std::size_t a = 0; a < kernel.size(); ++a)
    p += policy.pi.col(static_cast<Eigen::Index>(a)).asDiagonal() * kernel[a];
  return p;
}

MatrixXd policy_transition(const TabularMDP& mdp, const TabularPolicy& policy) {
  return policy_transition(mdp.transition, policy);
}

VectorXd policy_reward(const TabularMDP& mdp, const TabularPolicy& policy) {
  return mdp.reward.cwiseProduct(policy.pi).rowwise().sum();
}

double exact_return(const TabularMDP& mdp, const TabularPolicy& policy) {
  require(mdp.gamma < 1.0, ErrorKind::InvalidArgument, "exact return needs gamma < 1");
  const MatrixXd p = policy_transition(mdp, policy);
  const MatrixXd system = MatrixXd::Identity(mdp.n_states, mdp.n_states) - mdp.gamma * p;
  const VectorXd v = system.partialPivLu().solve(policy_reward(mdp, policy));
  return mdp.initial.dot(v);
}

VectorXd value_iteration(const TabularMDP& mdp, const TabularPolicy& policy, double tol, int max_iterations) {
  const MatrixXd p = policy_transition(mdp, policy);
  const VectorXd r = policy_reward(mdp, policy);
  VectorXd v = VectorXd::Zero(mdp.n_states);
  for (int it = 0; it < max_iterations; ++it) {
    VectorXd next = r + mdp.gamma * p * v;
    const double delta = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    if (delta < tol) break;
  }
  return v;
}

// ---------------------------------------------------------------------------
// pendulum

double wrap_angle(double x) {
  constexpr double pi = std::numbers::pi;
  double y = std::fmod(x + pi, 2.0 * pi);
  if (y < 0.0) y += 2.0 * pi;
  y -= pi;
  // fmod maps +pi to -pi; keep the interval half-open at -pi.
  return y == -pi ? pi : y;
}

std::pair<Eigen::Vector2d, double> PendulumEnv::dynamics(const Params& p, const Eigen::Vector2d& state, double torque) {
  const double u = std::clamp(torque, -p.max_torque, p.max_torque);
  const double th = state(0);
  const double thdot = state(1);
  const double thn = wrap_angle(th);
  const double cost = thn * thn + 0.1 * thdot * thdot + 0.001 * u * u;
  double new_thdot = thdot + (3.0 * p.g / (2.0 * p.l) * std::sin(th) + 3.0 / (p.m * p.l * p.l) * u) * p.dt;
  new_thdot = std::clamp(new_thdot, -p.max_speed, p.max_speed);
  const double new_th = wrap_angle(th + new_thdot * p.dt);
  return {Eigen::Vector2d(new_th, new_thdot), -cost};
}

VectorXd PendulumEnv::reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> th(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> thdot(-1.0, 1.0);
  const double a = th(rng);
  const double b = thdot(rng);
  set_state(a, b);
  return observation();
}

void PendulumEnv::set_state(double theta, double theta_dot) {
  theta_ = wrap_angle(theta);
  theta_dot_ = theta_dot;
}

VectorXd PendulumEnv::observation() const {
  VectorXd o(3);
  o << std::cos(theta_), std::sin(theta_), theta_dot_;
  return o;
}

double PendulumEnv::energy() const {
  return 0.5 * theta_dot_ * theta_dot_ + 3.0 * params_.g / (2.0 * params_.l) * std::cos(theta_);
}

StepResult PendulumEnv::step(const VectorXd& action) {
  require(action.size() == 1, ErrorKind::InvalidArgument, "pendulum takes a 1-d action");
  require(std::isfinite(action(0)), ErrorKind::InvalidArgument, "non-finite pendulum action");
  auto [next, reward] = dynamics(params_, Eigen::Vector2d(theta_, theta_dot_), action(0));
  theta_ = next(0);
  theta_dot_ = next(1);
  return {observation(), reward, false};
}

// ---------------------------------------------------------------------------
// linear system

LinearSystemEnv::LinearSystemEnv(MatrixXd a, MatrixXd b, VectorXd initial, double noise_std, std::uint64_t noise_seed,
                                 int episode_length, double action_bound)
    : a_(std::move(a)),
      b_(std::move(b)),
      initial_(std::move(initial)),
      state_(initial_),
      noise_std_(noise_std),
      noise_rng_(noise_seed),
      length_(episode_length),
      bound_(action_bound) {
  require(a_.rows() == a_.cols() && b_.rows() == a_.rows() && initial_.size() == a_.rows(),
          ErrorKind::InvalidArgument, "linear system matrices have inconsistent shapes");
}

VectorXd LinearSystemEnv::reset(std::mt19937_64&) {
  state_ = initial_;
  return state_;
}

StepResult LinearSystemEnv::step(const VectorXd& action) {
  require(action.size() == b_.cols(), ErrorKind::InvalidArgument, "action has the wrong dimension");
  const double reward = -(state_.squaredNorm() + 0.001 * action.squaredNorm());
  state_ = next_state(state_, action);
  if (noise_std_ > 0.0) {
    std::normal_distribution<double> n(0.0, noise_std_);
    for (Eigen::Index i = 0; i < state_.size(); ++i) state_(i) += n(noise_rng_);
  }
  return {state_, reward, false};
}

Policy uniform_random_policy(Eigen::Index action_dim, double bound) {
  return [action_dim, bound](const VectorXd&, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    VectorXd a(action_dim);
    for (Eigen::Index i = 0; i < action_dim; ++i) a(i) = u(rng);
    return a;
  };
}

Policy constant_policy(VectorXd action) {
  return [action = std::move(action)](const VectorXd&, std::mt19937_64&) { return action; };
}

trajdata::Trajectory collect_rollout(Env& env, const Policy& policy, int n_steps, std::uint64_t seed) {
  require(n_steps >= 1, ErrorKind::InvalidArgument, "rollout needs at least one step");
  std::mt19937_64 rng(seed);
  trajdata::Trajectory t;
  t.states.resize(n_steps, env.observation_dim());
  t.actions = MatrixXd(n_steps, env.action_dim());
  t.rewards = VectorXd(n_steps);
  VectorXd obs = env.reset(rng);
  int in_episode = 0;
  for (int i = 0; i < n_steps; ++i) {
    const VectorXd a = policy(obs, rng);
    t.states.row(i) = obs.transpose();
    t.actions->row(i) = a.transpose();
    auto res = env.step(a);
    (*t.rewards)(i) = res.reward;
    obs = std::move(res.observation);
    if (res.terminated || ++in_episode >= env.episode_length()) {
      obs = env.reset(rng);
      in_episode = 0;
    }
  }
  return t;
}

}  // namespace dicl::envs
