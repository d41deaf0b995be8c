#include "dicl/boundlab.hpp"

#include "dicl/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

namespace dicl::boundlab {

namespace {

// Compensated accumulator; chunk results are combined in a fixed order so the
// estimate does not depend on the worker count.
struct Kahan {
  double sum = 0.0;
  double c = 0.0;
  void add(double x) {
    const double y = x - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
};

constexpr std::size_t kChunks = 64;

struct ChunkResult {
  Kahan sum;
  Kahan sum_sq;
};

// Splits each 64-bit engine output into two 32-bit uniforms.
class Bits32 {
 public:
  explicit Bits32(std::mt19937_64& engine) : engine_(engine) {}
  std::uint32_t operator()() {
    if (have_) {
      have_ = false;
      return static_cast<std::uint32_t>(spare_ >> 32);
    }
    spare_ = engine_();
    have_ = true;
    return static_cast<std::uint32_t>(spare_);
  }

 private:
  std::mt19937_64& engine_;
  std::uint64_t spare_ = 0;
  bool have_ = false;
};

// Row-major cumulative thresholds on the 32-bit range; the next state is the
// number of thresholds at or below the draw.
class Sampler {
 public:
  explicit Sampler(const MatrixXd& p) : n_(static_cast<int>(p.cols())), cut_(static_cast<std::size_t>(p.size())) {
    for (Eigen::Index s = 0; s < p.rows(); ++s) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        acc += p(s, j);
        cut_[static_cast<std::size_t>(s * p.cols() + j)] = j + 1 == p.cols() ? kFull : threshold(acc);
      }
    }
  }

  int draw(int s, std::uint32_t u) const {
    const std::uint64_t* row = cut_.data() + static_cast<std::size_t>(s) * static_cast<std::size_t>(n_);
    int j = 0;
    for (int i = 0; i + 1 < n_; ++i) j += u >= row[i];
    return j;
  }

  static std::uint64_t threshold(double prob) {
    if (prob >= 1.0) return kFull;
    if (prob <= 0.0) return 0;
    return static_cast<std::uint64_t>(std::ldexp(prob, 32));
  }

  static constexpr std::uint64_t kFull = std::uint64_t{1} << 32;

 private:
  int n_;
  std::vector<std::uint64_t> cut_;
};

}  // namespace

void BranchConfig::validate() const {
  require(p >= 0.0 && p <= 1.0, ErrorKind::InvalidArgument, "branching probability must lie in [0, 1]");
  require(k >= 0, ErrorKind::InvalidArgument, "branch length must be >= 0");
  require(T >= 0, ErrorKind::InvalidArgument, "minimal context length must be >= 0");
  require(horizon >= 0, ErrorKind::InvalidArgument, "horizon must be >= 0");
  require(n_rollouts >= 2, ErrorKind::InvalidArgument, "need at least 2 rollouts for a standard error");
  require(jobs >= 1, ErrorKind::InvalidArgument, "jobs must be >= 1");
}

void ModelPair::validate() const {
  mdp.validate();
  require(static_cast<int>(model.size()) == mdp.n_actions, ErrorKind::InvalidArgument, "model needs one kernel per action");
  for (const auto& m : model) {
    require(m.rows() == mdp.n_states && m.cols() == mdp.n_states, ErrorKind::InvalidArgument, "model kernel must be S x S");
    for (Eigen::Index s = 0; s < m.rows(); ++s) {
      require((m.row(s).array() >= 0.0).all(), ErrorKind::InvalidArgument, "model kernel has negative entries");
      require(std::abs(m.row(s).sum() - 1.0) <= 1e-12, ErrorKind::InvalidArgument, "model kernel row does not sum to one");
    }
  }
}

ModelPair random_pair(int n_states, int n_actions, double gamma, double r_max, std::uint64_t seed) {
  ModelPair pair;
  pair.mdp = envs::random_mdp(n_states, n_actions, gamma, r_max, seed);
  pair.model = envs::random_kernel(n_states, n_actions, seed ^ 0x5DEECE66DULL);
  return pair;
}

int default_horizon(double gamma, double r_max, double tol) {
  require(gamma >= 0.0 && gamma < 1.0, ErrorKind::InvalidArgument, "gamma must lie in [0, 1)");
  require(tol > 0.0, ErrorKind::InvalidArgument, "truncation tolerance must be positive");
  if (gamma == 0.0) return 1;
  int h = 0;
  double tail = r_max / (1.0 - gamma);
  while (tail >= tol) {
    tail *= gamma;
    ++h;
  }
  return h;
}

double tv_distance(const VectorXd& p, const VectorXd& q) {
  require(p.size() == q.size(), ErrorKind::InvalidArgument, "TV distance needs equal-length vectors");
  return 0.5 * (p - q).cwiseAbs().sum();
}

VectorXd per_step_model_error(const ModelPair& pair, const TabularPolicy& pi, int t_max) {
  const auto& m = pair.mdp;
  // Per-state expected TV over the policy's actions.
  VectorXd tv_s = VectorXd::Zero(m.n_states);
  for (int s = 0; s < m.n_states; ++s)
    for (int a = 0; a < m.n_actions; ++a)
      tv_s(s) += pi.pi(s, a) * tv_distance(m.transition[static_cast<std::size_t>(a)].row(s).transpose(),
                                           pair.model[static_cast<std::size_t>(a)].row(s).transpose());
  const MatrixXd p = envs::policy_transition(m, pi);
  VectorXd out(t_max + 1);
  Eigen::RowVectorXd dist = m.initial.transpose();
  for (int t = 0; t <= t_max; ++t) {
    out(t) = dist.dot(tv_s);
    dist = dist * p;
  }
  return out;
}

double epsilon_llm(const ModelPair& pair, const TabularPolicy& pi, int T, int H) {
  require(T >= 0 && H >= T, ErrorKind::InvalidArgument, "need 0 <= T <= H");
  const VectorXd e = per_step_model_error(pair, pi, H);
  return e.segment(T, H - T + 1).maxCoeff();
}

LemmaReport lemma_b2_check(const ModelPair& pair, const TabularPolicy& pi, const VectorXd& mu0, int t_max) {
  require(t_max >= 1, ErrorKind::InvalidArgument, "t_max must be >= 1");
  require(mu0.size() == pair.mdp.n_states, ErrorKind::InvalidArgument, "mu0 must have S entries");
  const MatrixXd p = envs::policy_transition(pair.mdp, pi);
  const MatrixXd q = envs::policy_transition(pair.model, pi);
  VectorXd row_tv(p.rows());
  for (Eigen::Index s = 0; s < p.rows(); ++s) row_tv(s) = tv_distance(p.row(s).transpose(), q.row(s).transpose());

  LemmaReport rep;
  rep.eps.assign(static_cast<std::size_t>(t_max) + 1, 0.0);
  rep.xi.assign(static_cast<std::size_t>(t_max) + 1, 0.0);
  Eigen::RowVectorXd dp = mu0.transpose();
  Eigen::RowVectorXd dq = mu0.transpose();
  double cumulative = 0.0;
  for (int t = 1; t <= t_max; ++t) {
    // xi_t weights the one-step error by the true marginal at t - 1.
    rep.xi[static_cast<std::size_t>(t)] = dp.dot(row_tv);
    dp = dp * p;
    dq = dq * q;
    rep.eps[static_cast<std::size_t>(t)] = tv_distance(dp.transpose(), dq.transpose());
    cumulative += rep.xi[static_cast<std::size_t>(t)];
    if (rep.eps[static_cast<std::size_t>(t)] > cumulative + 1e-12) rep.holds = false;
  }
  return rep;
}

ReturnEstimate multibranch_return(const ModelPair& pair, const TabularPolicy& pi, const BranchConfig& cfg) {
  cfg.validate();
  const auto& m = pair.mdp;
  const int H = cfg.horizon > 0 ? cfg.horizon : default_horizon(m.gamma, m.r_max);
  const MatrixXd p_true = envs::policy_transition(m, pi);
  const MatrixXd p_model = envs::policy_transition(pair.model, pi);
  const Sampler true_step(p_true);
  const Sampler model_step(p_model);
  const Sampler initial(m.initial.transpose());
  const VectorXd r = envs::policy_reward(m, pi);
  const VectorXd r_model_next = p_model * r;
  const VectorXd v_true =
      (MatrixXd::Identity(m.n_states, m.n_states) - m.gamma * p_true).partialPivLu().solve(r);
  // With k = 0 no branch ever spans a step: the estimate is the true return.
  if (cfg.k == 0) return {envs::exact_return(m, pi), 0.0, H};
  const bool branching = cfg.p > 0.0;
  const int k = cfg.k;
  const std::uint64_t p_cut = Sampler::threshold(cfg.p);

  std::vector<ChunkResult> chunks(kChunks);
  auto run_chunk = [&](std::size_t c) {
    const std::size_t begin = cfg.n_rollouts * c / kChunks;
    const std::size_t end = cfg.n_rollouts * (c + 1) / kChunks;
    std::seed_seq sq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                     static_cast<std::uint32_t>(c)};
    std::mt19937_64 engine(sq);
    Bits32 rng(engine);
    // Ring of branch states indexed by (start - T) mod k; -1 marks no branch.
    std::vector<int> branch(static_cast<std::size_t>(k), -1);
    for (std::size_t n = begin; n < end; ++n) {
      std::fill(branch.begin(), branch.end(), -1);
      int live = 0;
      int ring = 0;
      int s = initial.draw(0, rng());
      double ret = 0.0;
      double disc = 1.0;
      for (int t = 0; t <= H; ++t) {
        double reward = r(s);
        if (live > 0 && t > cfg.T) {
          // Advance every live branch to time t. The slot at `ring` started at
          // t - k and takes its last step now; its state is never read again, so
          // it contributes its expected next reward instead of a draw.
          double acc = 0.0;
          for (int i = 0; i < k; ++i) {
            int& b = branch[static_cast<std::size_t>(i)];
            if (b < 0) continue;
            if (i == ring) {
              acc += r_model_next(b);
            } else {
              b = model_step.draw(b, rng());
              acc += r(b);
            }
          }
          reward = acc / live;
        }
        ret += disc * reward;
        if (branching && t >= cfg.T) {
          // The slot reused here held the branch started at t - k, which ends at t.
          int& slot = branch[static_cast<std::size_t>(ring)];
          ring = ring + 1 == k ? 0 : ring + 1;
          live -= slot >= 0;
          slot = rng() < p_cut ? s : -1;
          live += slot >= 0;
        }
        s = true_step.draw(s, rng());
        disc *= m.gamma;
      }
      ret += disc * v_true(s);
      chunks[c].sum.add(ret);
      chunks[c].sum_sq.add(ret * ret);
    }
  };

  const int workers = std::min<int>(cfg.jobs, static_cast<int>(kChunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < kChunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t c = static_cast<std::size_t>(w); c < kChunks; c += static_cast<std::size_t>(workers)) run_chunk(c);
      });
    for (auto& th : pool) th.join();
  }

  Kahan total, total_sq;
  for (const auto& c : chunks) {
    total.add(c.sum.sum);
    total_sq.add(c.sum_sq.sum);
  }
  const auto n = static_cast<double>(cfg.n_rollouts);
  const double mean = total.sum / n;
  const double var = std::max(0.0, (total_sq.sum - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n), H};
}

double theorem1_rhs(double gamma, int T, double r_max, int k, double p, double eps) {
  return 2.0 * std::pow(gamma, T) / (1.0 - gamma) * r_max * static_cast<double>(k) * static_cast<double>(k) * p * eps;
}

TheoremReport theorem1_check(const ModelPair& pair, const TabularPolicy& pi, const BranchConfig& cfg) {
  pair.validate();
  pi.validate(pair.mdp.n_states, pair.mdp.n_actions);
  const auto est = multibranch_return(pair, pi, cfg);
  TheoremReport rep;
  rep.eta = envs::exact_return(pair.mdp, pi);
  rep.eta_hat = est.eta_hat;
  rep.std_error = est.std_error;
  rep.lhs = std::abs(rep.eta - rep.eta_hat);
  rep.eps = epsilon_llm(pair, pi, cfg.T, est.horizon);
  rep.rhs = theorem1_rhs(pair.mdp.gamma, cfg.T, pair.mdp.r_max, cfg.k, cfg.p, rep.eps);
  rep.slack = rep.rhs - (rep.lhs - 3.0 * rep.std_error);
  rep.holds = rep.slack >= 0.0;
  return rep;
}

}  // namespace dicl::boundlab
