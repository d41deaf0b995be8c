#include "dicl/disentangle.hpp"

#include "dicl/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace dicl::disentangle {

namespace {

MatrixXd centered(const MatrixXd& data, const VectorXd& mean) { return data.rowwise() - mean.transpose(); }

VectorXd feature_scale(const MatrixXd& data, const VectorXd& mean, bool standardize) {
  VectorXd scale = VectorXd::Ones(data.cols());
  if (!standardize) return scale;
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    const double var = (data.col(j).array() - mean(j)).square().sum() / static_cast<double>(data.rows() - 1);
    const double sd = std::sqrt(var);
    // Near-constant columns are left unscaled.
    if (sd > 1e-12 * std::max(1.0, std::abs(mean(j)))) scale(j) = sd;
  }
  return scale;
}

Eigen::Index rank_of(const VectorXd& eigenvalues_desc) {
  if (eigenvalues_desc.size() == 0) return 0;
  const double top = std::max(eigenvalues_desc(0), 0.0);
  const double tol = top * 1e-10 * static_cast<double>(eigenvalues_desc.size());
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < eigenvalues_desc.size(); ++i)
    if (eigenvalues_desc(i) > tol && eigenvalues_desc(i) > 0.0) ++r;
  return r;
}

}  // namespace

MatrixXd covariance_matrix(const MatrixXd& data) {
  require(data.rows() >= 2, ErrorKind::InvalidArgument, "covariance needs at least 2 rows");
  const VectorXd mean = data.colwise().mean().transpose();
  const MatrixXd c = centered(data, mean);
  MatrixXd cov = (c.transpose() * c) / static_cast<double>(data.rows() - 1);
  // Exact symmetry regardless of summation order.
  return 0.5 * (cov + cov.transpose());
}

MatrixXd correlation_matrix(const MatrixXd& data) {
  MatrixXd cov = covariance_matrix(data);
  const VectorXd sd = cov.diagonal().array().sqrt();
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    for (Eigen::Index j = 0; j < cov.cols(); ++j)
      cov(i, j) = (sd(i) > 0.0 && sd(j) > 0.0) ? cov(i, j) / (sd(i) * sd(j)) : (i == j ? 1.0 : 0.0);
  return cov;
}

Eigen::Index default_component_count(Eigen::Index features) { return std::max<Eigen::Index>(1, (features + 1) / 2); }

Eigen::Index attainable_rank(const MatrixXd& data, const PcaOptions& options) {
  const VectorXd mean = data.colwise().mean().transpose();
  const VectorXd scale = feature_scale(data, mean, options.standardize);
  const MatrixXd scaled = centered(data, mean).array().rowwise() / scale.transpose().array();
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(covariance_matrix(scaled), Eigen::EigenvaluesOnly);
  return rank_of(solver.eigenvalues().reverse());
}

PcaMap fit_pca(const MatrixXd& data, Eigen::Index n_components, const PcaOptions& options) {
  require(data.rows() >= 2, ErrorKind::InvalidArgument, "PCA needs at least 2 samples");
  require(data.cols() >= 1, ErrorKind::InvalidArgument, "PCA needs at least one feature");
  require(data.allFinite(), ErrorKind::InvalidArgument, "PCA input has non-finite values");
  require(n_components >= 1 && n_components <= data.cols(), ErrorKind::InvalidArgument,
          "component count must lie in [1, " + std::to_string(data.cols()) + "]");

  PcaMap map;
  map.mean = data.colwise().mean().transpose();
  map.scale = feature_scale(data, map.mean, options.standardize);
  const MatrixXd scaled = centered(data, map.mean).array().rowwise() / map.scale.transpose().array();
  const MatrixXd cov = covariance_matrix(scaled);

  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(cov);
  require(solver.info() == Eigen::Success, ErrorKind::Numerical, "eigendecomposition failed");
  const VectorXd values = solver.eigenvalues().reverse();
  const MatrixXd vectors = solver.eigenvectors().rowwise().reverse();

  const auto rank = rank_of(values);
  require(n_components <= rank, ErrorKind::InvalidArgument,
          "requested " + std::to_string(n_components) + " components but the data has attainable rank " +
              std::to_string(rank));

  map.components.resize(n_components, data.cols());
  map.explained_variance.resize(n_components);
  for (Eigen::Index k = 0; k < n_components; ++k) {
    VectorXd v = vectors.col(k);
    Eigen::Index arg = 0;
    const double top = v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < v.size(); ++i)
      if (std::abs(v(i)) >= top - 1e-12) {
        arg = i;
        break;
      }
    if (v(arg) < 0.0) v = -v;
    map.components.row(k) = v.transpose();
    map.explained_variance(k) = std::max(values(k), 0.0);
  }
  return map;
}

MatrixXd PcaMap::transform(const MatrixXd& x) const {
  require(x.cols() == input_dim(), ErrorKind::InvalidArgument,
          "PCA map expects " + std::to_string(input_dim()) + " features, got " + std::to_string(x.cols()));
  const MatrixXd scaled = (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  return scaled * components.transpose();
}

MatrixXd PcaMap::inverse(const MatrixXd& z) const {
  require(z.cols() == n_components(), ErrorKind::InvalidArgument,
          "PCA map has " + std::to_string(n_components()) + " components, got " + std::to_string(z.cols()));
  MatrixXd x = z * components;
  x = x.array().rowwise() * scale.transpose().array();
  return x.rowwise() + mean.transpose();
}

std::string PcaMap::to_json() const {
  nlohmann::json j;
  j["d"] = input_dim();
  j["c"] = n_components();
  j["mean"] = std::vector<double>(mean.data(), mean.data() + mean.size());
  j["scale"] = std::vector<double>(scale.data(), scale.data() + scale.size());
  std::vector<double> rows;
  for (Eigen::Index r = 0; r < components.rows(); ++r)
    for (Eigen::Index c = 0; c < components.cols(); ++c) rows.push_back(components(r, c));
  j["components"] = rows;
  j["explained_variance"] =
      std::vector<double>(explained_variance.data(), explained_variance.data() + explained_variance.size());
  return j.dump();
}

PcaMap PcaMap::from_json(const std::string& text) {
  PcaMap m;
  try {
    const auto j = nlohmann::json::parse(text);
    const auto d = j.at("d").get<Eigen::Index>();
    const auto c = j.at("c").get<Eigen::Index>();
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto comps = j.at("components").get<std::vector<double>>();
    const auto ev = j.at("explained_variance").get<std::vector<double>>();
    std::vector<double> scale(static_cast<std::size_t>(d), 1.0);
    if (j.contains("scale")) scale = j["scale"].get<std::vector<double>>();
    require(static_cast<Eigen::Index>(mean.size()) == d && static_cast<Eigen::Index>(scale.size()) == d &&
                static_cast<Eigen::Index>(comps.size()) == c * d && static_cast<Eigen::Index>(ev.size()) == c,
            ErrorKind::Schema, "PCA map JSON has inconsistent sizes");
    m.mean = Eigen::Map<const VectorXd>(mean.data(), d);
    m.scale = Eigen::Map<const VectorXd>(scale.data(), d);
    m.components = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        comps.data(), c, d);
    m.explained_variance = Eigen::Map<const VectorXd>(ev.data(), c);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("PCA map JSON: ") + e.what());
  }
  return m;
}

}  // namespace dicl::disentangle
