#pragma once

#include <Eigen/Dense>

#include <string>

namespace dicl::disentangle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct PcaOptions {
  /// Divide each feature by its standard deviation before the covariance is
  /// formed, so PCA runs on the correlation matrix. Constant features keep a
  /// unit scale.
  bool standardize = true;
};

/// Fitted orthogonal feature map: z = ((x - mean) / scale) * components^T.
struct PcaMap {
  VectorXd mean;                // [d]
  VectorXd scale;               // [d], ones when not standardized
  MatrixXd components;          // [c x d], orthonormal rows
  VectorXd explained_variance;  // [c], nonincreasing

  Eigen::Index input_dim() const { return mean.size(); }
  Eigen::Index n_components() const { return components.rows(); }

  MatrixXd transform(const MatrixXd& x) const;
  MatrixXd inverse(const MatrixXd& z) const;

  std::string to_json() const;
  static PcaMap from_json(const std::string& text);
};

/// Top-c eigenvectors of the sample covariance (1/(n-1) normalisation). The
/// largest-magnitude entry of every component is made positive.
PcaMap fit_pca(const MatrixXd& data, Eigen::Index n_components, const PcaOptions& options = {});

/// ceil(d / 2), at least 1.
Eigen::Index default_component_count(Eigen::Index features);

MatrixXd covariance_matrix(const MatrixXd& data);
MatrixXd correlation_matrix(const MatrixXd& data);

/// Numerical rank of the (scaled) covariance used by fit_pca.
Eigen::Index attainable_rank(const MatrixXd& data, const PcaOptions& options = {});

}  // namespace dicl::disentangle
