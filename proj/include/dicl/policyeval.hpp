#pragma once

#include "dicl/forecaster.hpp"
#include "dicl/predictor.hpp"
#include "dicl/trajdata.hpp"

#include <string>
#include <vector>

namespace dicl::policyeval {

enum class Discount { Undiscounted, Gamma };

struct HybridEvalSpec {
  Eigen::Index context = 500;   // T real steps before the forecast
  Eigen::Index horizon = 500;   // k forecast steps
  Eigen::Index episode_length = 1000;
  predict::DiclMethod method{};  // include_reward is forced on
  Discount discount = Discount::Undiscounted;
  double gamma = 0.99;

  void validate() const;
};

struct HybridValue {
  double v_hat = 0.0;
  double v_true = 0.0;
  double abs_err = 0.0;
  /// |v_hat - v_true| / |v_true|; equals abs_err when relative_defined is false.
  double rel_err = 0.0;
  bool relative_defined = true;
  std::vector<double> predicted_rewards;
};

/// Real rewards on [0, T) and [T + k, L), forecast rewards on [T, T + k).
HybridValue hybrid_value(const trajdata::Trajectory& episode, const HybridEvalSpec& spec,
                         const forecast::ForecastBackend& backend);

struct SweepRow {
  std::size_t episode = 0;
  Eigen::Index context = 0;
  Eigen::Index horizon = 0;
  HybridValue value;
};

/// Every (episode, T, k) combination with T + k <= L; episodes run on up to
/// `jobs` threads and rows come back in a fixed order.
std::vector<SweepRow> hybrid_sweep(const std::vector<trajdata::Trajectory>& episodes,
                                   const std::vector<Eigen::Index>& contexts, const std::vector<Eigen::Index>& horizons,
                                   const HybridEvalSpec& base, const forecast::ForecastBackend& backend, int jobs = 1);

std::string to_csv(const std::vector<SweepRow>& rows);

}  // namespace dicl::policyeval
