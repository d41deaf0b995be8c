#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dicl::trajdata {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// One episode: row t of every present field is time step t.
struct Trajectory {
  MatrixXd states;                  // [T x d_s]
  std::optional<MatrixXd> actions;  // [T x d_a]
  std::optional<VectorXd> rewards;  // [T]

  Eigen::Index length() const { return states.rows(); }
  Eigen::Index state_dim() const { return states.cols(); }
  Eigen::Index action_dim() const { return actions ? actions->cols() : 0; }

  /// Rows [begin, begin + count).
  Trajectory slice(Eigen::Index begin, Eigen::Index count) const;

  /// Throws Schema on empty states, mismatched lengths, or non-finite values.
  void validate() const;
};

Trajectory make_trajectory(MatrixXd states, std::optional<MatrixXd> actions = std::nullopt,
                           std::optional<VectorXd> rewards = std::nullopt);

struct Dataset {
  std::vector<Trajectory> trajectories;
  std::string source;
  std::string policy;

  Eigen::Index state_dim() const;
  Eigen::Index action_dim() const;
  std::size_t total_steps() const;
};

/// Column mapping read from the sidecar manifest.
struct Manifest {
  std::vector<std::string> state_cols;
  std::vector<std::string> action_cols;
  std::optional<std::string> reward_col;
  std::optional<std::string> episode_col;
  std::string source;
  std::string policy;
};

enum class FileFormat { Csv, Jsonl };

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// `data.csv` -> `data.manifest.json`.
std::filesystem::path default_manifest_path(const std::filesystem::path& data_path);

/// Reads a CSV (header row required) or JSONL file. Consecutive rows sharing an
/// episode id form one trajectory; without an episode column the whole file is
/// one trajectory. Malformed rows throw Parse with the 1-based line number.
Dataset load_dataset(const std::filesystem::path& path, FileFormat format,
                     const std::optional<std::filesystem::path>& manifest_path = std::nullopt);

/// Writes CSV plus sidecar manifest. Column names are s0.., a0.., r, episode.
void save_dataset(const Dataset& dataset, const std::filesystem::path& csv_path);

enum class Block { States, Actions, Rewards, StatesActions };

/// Rows from every trajectory stacked, restricted to `block`.
MatrixXd stack(const Dataset& dataset, Block block);
MatrixXd features(const Trajectory& traj, Block block);

/// Min-max to [0,1] followed by standardization. Constant dimensions are
/// flagged and pass through stage 2 unchanged.
class ScalerPipeline {
 public:
  ScalerPipeline() = default;

  static ScalerPipeline fit(const MatrixXd& data);
  static ScalerPipeline identity(Eigen::Index dims);

  MatrixXd transform(const MatrixXd& x) const;
  MatrixXd inverse(const MatrixXd& z) const;

  Eigen::Index dims() const { return min_.size(); }
  const VectorXd& min() const { return min_; }
  const VectorXd& max() const { return max_; }
  const VectorXd& mean() const { return mean_; }
  const VectorXd& stddev() const { return std_; }
  bool is_constant(Eigen::Index dim) const { return constant_[static_cast<std::size_t>(dim)]; }

 private:
  VectorXd min_, max_, range_, mean_, std_;
  std::vector<bool> constant_;
};

ScalerPipeline fit_scaler(const Dataset& dataset, Block block);

}  // namespace dicl::trajdata
