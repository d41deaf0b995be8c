#pragma once

#include "dicl/envs.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace dicl::boundlab {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using envs::TabularMDP;
using envs::TabularPolicy;

struct BranchConfig {
  double p = 0.1;           // branching probability per timestep
  int k = 1;                // branch length
  int T = 0;                // minimal context length; branches start at t >= T
  int horizon = 0;          // truncation H; 0 selects default_horizon()
  std::size_t n_rollouts = 200000;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
};

/// True MDP plus a model kernel over the same (S, A).
struct ModelPair {
  TabularMDP mdp;
  std::vector<MatrixXd> model;  // per action, [S x S]

  void validate() const;
};

/// A random MDP and an independently drawn model kernel.
ModelPair random_pair(int n_states, int n_actions, double gamma, double r_max, std::uint64_t seed);

/// Smallest H with gamma^H r_max / (1 - gamma) < tol.
int default_horizon(double gamma, double r_max, double tol = 1e-4);

double tv_distance(const VectorXd& p, const VectorXd& q);

/// Expected per-(s, a) TV under the true state marginal at step t.
VectorXd per_step_model_error(const ModelPair& pair, const TabularPolicy& pi, int t_max);

/// max over t in [T, H] of E_{s ~ P^t, a ~ pi} TV(P(.|s,a), P_hat(.|s,a)).
double epsilon_llm(const ModelPair& pair, const TabularPolicy& pi, int T, int H);

struct LemmaReport {
  std::vector<double> eps;  // eps[t], t = 0..t_max
  std::vector<double> xi;   // xi[t], t = 0..t_max
  bool holds = true;
};

/// Multi-step TV of the policy-marginalised chains from mu0 against the
/// accumulated one-step errors.
LemmaReport lemma_b2_check(const ModelPair& pair, const TabularPolicy& pi, const VectorXd& mu0, int t_max);

struct ReturnEstimate {
  double eta_hat = 0.0;
  double std_error = 0.0;
  int horizon = 0;
};

/// Monte Carlo multi-branch return. One true chain per rollout; every t >= T
/// starts a k-step model branch from the true state with probability p.
/// Rewards are r^pi of the visited state; the value after H is bootstrapped
/// with the exact true-dynamics value of the true chain.
ReturnEstimate multibranch_return(const ModelPair& pair, const TabularPolicy& pi, const BranchConfig& cfg);

/// 2 gamma^T / (1 - gamma) r_max k^2 p eps.
double theorem1_rhs(double gamma, int T, double r_max, int k, double p, double eps);

struct TheoremReport {
  double eta = 0.0;
  double eta_hat = 0.0;
  double std_error = 0.0;
  double lhs = 0.0;
  double eps = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // rhs - (lhs - 3 stderr)
  bool holds = false;
};

TheoremReport theorem1_check(const ModelPair& pair, const TabularPolicy& pi, const BranchConfig& cfg);

}  // namespace dicl::boundlab
