#pragma once

#include "dicl/forecaster.hpp"
#include "dicl/trajdata.hpp"

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dicl::metrics {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using forecast::NextValueDistribution;

struct MultiStepMseReport {
  std::vector<int> horizons;  // 1-based
  MatrixXd mse;               // [d x horizons.size()]
  std::size_t n_rollouts = 0;

  /// Mean over dimensions and listed horizons.
  double average() const { return mse.size() ? mse.mean() : 0.0; }
  VectorXd per_horizon() const { return mse.colwise().mean().transpose(); }
  std::string to_csv() const;
};

/// predictions[i] and truths[i] are [h_max x d] blocks for one rollout. Both
/// pass through `scaler` before squaring; entries average over rollouts.
MultiStepMseReport multistep_mse(const std::vector<MatrixXd>& predictions, const std::vector<MatrixXd>& truths,
                                 const trajdata::ScalerPipeline& scaler, const std::vector<int>& horizons);

struct CalibrationReport {
  std::vector<double> grid;
  std::vector<double> frequencies;
  double ks = 0.0;
  std::size_t n = 0;

  std::string to_csv() const;
  std::string ks_json() const;
};

/// 0.05, 0.10, ..., 0.95.
std::vector<double> default_quantile_grid();

/// Truth quantile under a distribution: CDF at the truth's bin, atom included.
double truth_quantile(const NextValueDistribution& dist, double truth);

/// Streaming form of reliability_diagram; keeps only one PIT value per sample.
class CalibrationAccumulator {
 public:
  explicit CalibrationAccumulator(std::vector<double> grid = default_quantile_grid());
  void add(const NextValueDistribution& dist, double truth);
  std::size_t count() const { return pit_.size(); }
  CalibrationReport finish() const;

 private:
  std::vector<double> grid_;
  std::vector<double> hits_;
  std::vector<double> pit_;
};

CalibrationReport reliability_diagram(std::span<const NextValueDistribution> dists, std::span<const double> truths,
                                      const std::vector<double>& grid = default_quantile_grid());

/// max_i |F_N(q_i) - q_i| with F_N the empirical CDF of the inputs.
double ks_statistic(std::span<const double> quantiles);

/// Largest Euclidean distance between any two rows.
double state_coverage(const MatrixXd& states);
double state_coverage(const trajdata::Dataset& dataset);

/// Deterministic one-step dynamics s' = f(s, a).
using StepFunction = std::function<VectorXd(const VectorXd& state, const VectorXd& action)>;

/// Entry (k, i) = |f(x + e_i)_k - f(x)_k| with e_i = perturbation * scale(i)
/// on input i (states first, then actions).
MatrixXd sensitivity_matrix(const StepFunction& f, const VectorXd& state, const VectorXd& action,
                            const VectorXd& scale, double perturbation = 0.10);

/// Per-dimension standard deviations of states | actions over a dataset.
VectorXd input_scales(const trajdata::Dataset& dataset);

}  // namespace dicl::metrics
