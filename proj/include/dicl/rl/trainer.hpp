#pragma once

#include "dicl/envs.hpp"
#include "dicl/forecaster.hpp"
#include "dicl/predictor.hpp"
#include "dicl/rl/replay.hpp"
#include "dicl/rl/sac.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dicl::rl {

struct DiclSacConfig {
  double llm_alpha = 0.05;  // share of the batch drawn from the synthetic buffer
  int batch_size = 64;
  int update_frequency = 200;
  int gradient_steps = 0;  // per update round; 0 means update_frequency
  int learning_starts = 1000;
  int llm_learning_starts = 2000;
  int llm_learning_frequency = 16;
  int context_min = 1;    // T
  int context_max = 198;  // T_max
  int total_steps = 10000;
  std::size_t buffer_size = 1000000;
  SacConfig sac{};
  std::uint64_t seed = 0;

  /// ceil(alpha * b), with a small guard so exact products are not rounded up.
  int llm_batch_size() const;
  /// |B_llm| / |B|.
  double balancing_coefficient() const;
  bool generates() const { return llm_alpha > 0.0; }
  void validate() const;
};

struct TrainingLogRow {
  long step = 0;
  std::optional<double> episode_return;
  std::optional<double> qf_loss;
  std::optional<double> actor_loss;
  std::optional<double> alpha;
  std::size_t llm_transitions = 0;
};

struct TrainingResult {
  std::vector<TrainingLogRow> rows;
  std::vector<double> episode_returns;
  std::size_t generation_rounds = 0;
  std::size_t generation_failures = 0;
  std::size_t llm_steps_skipped = 0;  // updates where the synthetic buffer was still empty
  std::size_t gradient_updates = 0;
  /// Per env step: the observation and the auxiliary action drawn for it (only
  /// filled when generation is enabled).
  MatrixXd observations;
  MatrixXd aux_actions;
  std::optional<LlmReplayBuffer> llm_buffer;
  /// Final network weights, flattened layer by layer.
  VectorXd actor_parameters, q1_parameters, q2_parameters;
  double log_alpha = 0.0;

  /// Mean of the last n completed episode returns.
  double final_mean_return(std::size_t n = 10) const;
  std::string to_csv() const;
};

/// Training loop with synthetic-transition augmentation. A null backend is
/// allowed only when llm_alpha is 0.
TrainingResult dicl_sac_train(envs::Env& env, const DiclSacConfig& cfg, const predict::DiclMethod& method,
                              const forecast::ForecastBackend* backend);

/// Plain SAC with the same seed discipline.
TrainingResult sac_train(envs::Env& env, DiclSacConfig cfg);

}  // namespace dicl::rl
