#pragma once

#include "dicl/disentangle.hpp"
#include "dicl/forecaster.hpp"
#include "dicl/trajdata.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dicl::predict {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using forecast::ForecastBackend;
using forecast::NextValueDistribution;
using trajdata::Trajectory;

enum class MethodKind { Vicl, DiclS, DiclSA };
enum class Sampling { Mean, Mode, Sample };

std::string to_string(MethodKind kind);
std::string to_string(Sampling sampling);
MethodKind method_kind_from_string(const std::string& name);
Sampling sampling_from_string(const std::string& name);

struct DiclMethod {
  MethodKind kind = MethodKind::Vicl;
  /// Append the reward as one more feature (before PCA for the DICL variants).
  bool include_reward = false;
  /// 0 selects ceil(features / 2). Ignored by vicl.
  Eigen::Index n_components = 0;
  Sampling sampling = Sampling::Mode;
  tokenizer::NumericEncoding encoding{};
  bool standardize = true;
  double lower_quantile = 0.05;
  double upper_quantile = 0.95;
  /// Joint draws used to push component quantiles back to feature space.
  std::size_t interval_samples = 256;
  std::uint64_t seed = 0;
  /// Per-series forecasts within one step may run concurrently.
  int jobs = 1;

  void validate() const;
};

/// Column layout of the forecast features: states | actions (dicl_sa) | reward.
struct FeatureLayout {
  Eigen::Index states = 0;
  Eigen::Index actions = 0;
  bool reward = false;

  Eigen::Index size() const { return states + actions + (reward ? 1 : 0); }
};

FeatureLayout layout_for(const Trajectory& traj, const DiclMethod& method);
MatrixXd feature_matrix(const Trajectory& traj, const DiclMethod& method);

/// One predicted step. Vectors are indexed by the feature layout.
struct ForecastResult {
  FeatureLayout layout;
  VectorXd point;  // value fed back into the rollout, per the sampling rule
  VectorXd mean;
  VectorXd mode;
  VectorXd lower;
  VectorXd upper;
  /// One per forecast series: raw dimensions for vicl, PCA components otherwise.
  std::vector<NextValueDistribution> distributions;

  VectorXd state() const { return point.head(layout.states); }
  VectorXd action() const { return point.segment(layout.states, layout.actions); }
  std::optional<double> reward() const {
    return layout.reward ? std::optional<double>(point(layout.size() - 1)) : std::nullopt;
  }
};

struct RolloutOptions {
  /// dicl_sa only: actions for the predicted steps, [h x d_a]. When set they
  /// replace the forecast actions after each step.
  std::optional<MatrixXd> oracle_actions;
};

/// Autoregressive h-step forecast from the whole of `context`.
std::vector<ForecastResult> rollout(const Trajectory& context, Eigen::Index horizon, const DiclMethod& method,
                                    const ForecastBackend& backend, const RolloutOptions& options = {});

ForecastResult predict_next(const Trajectory& context, const DiclMethod& method, const ForecastBackend& backend);

/// Teacher-forced one-step forecasts: element i predicts the features at
/// step i + 1 from steps 0..i, for i in [0, length - 1). With include_last
/// the step after the final one is forecast too.
std::vector<ForecastResult> one_step_forecasts(const Trajectory& traj, const DiclMethod& method,
                                               const ForecastBackend& backend, bool include_last = false);

/// Rows of a rollout as a [h x f] matrix of points.
MatrixXd points(const std::vector<ForecastResult>& results);

std::string to_json(const std::vector<ForecastResult>& results, bool include_probs);

}  // namespace dicl::predict
