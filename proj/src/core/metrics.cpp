#include "dicl/metrics.hpp"

#include "dicl/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace dicl::metrics {

MultiStepMseReport multistep_mse(const std::vector<MatrixXd>& predictions, const std::vector<MatrixXd>& truths,
                                 const trajdata::ScalerPipeline& scaler, const std::vector<int>& horizons) {
  require(predictions.size() == truths.size(), ErrorKind::InvalidArgument, "prediction/truth counts differ");
  require(!predictions.empty(), ErrorKind::InvalidArgument, "no rollouts to score");
  require(!horizons.empty(), ErrorKind::InvalidArgument, "no horizons requested");
  const auto d = predictions.front().cols();
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    require(predictions[i].rows() == truths[i].rows() && predictions[i].cols() == truths[i].cols() &&
                predictions[i].cols() == d,
            ErrorKind::InvalidArgument, "prediction/truth shapes differ at rollout " + std::to_string(i));
    for (int h : horizons)
      require(h >= 1 && h <= predictions[i].rows(), ErrorKind::InvalidArgument,
              "horizon " + std::to_string(h) + " exceeds rollout length");
  }
  MultiStepMseReport rep;
  rep.horizons = horizons;
  rep.n_rollouts = predictions.size();
  rep.mse = MatrixXd::Zero(d, static_cast<Eigen::Index>(horizons.size()));
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const MatrixXd err = scaler.transform(predictions[i]) - scaler.transform(truths[i]);
    for (std::size_t h = 0; h < horizons.size(); ++h)
      rep.mse.col(static_cast<Eigen::Index>(h)) += err.row(horizons[h] - 1).transpose().array().square().matrix();
  }
  rep.mse /= static_cast<double>(predictions.size());
  return rep;
}

std::string MultiStepMseReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(12) << "dim,horizon,mse\n";
  for (Eigen::Index k = 0; k < mse.rows(); ++k)
    for (std::size_t h = 0; h < horizons.size(); ++h)
      os << k << ',' << horizons[h] << ',' << mse(k, static_cast<Eigen::Index>(h)) << '\n';
  return os.str();
}

std::vector<double> default_quantile_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 19; ++i) g.push_back(0.05 * i);
  return g;
}

double truth_quantile(const NextValueDistribution& dist, double truth) { return dist.cdf_bin(dist.bin_of(truth)); }

CalibrationAccumulator::CalibrationAccumulator(std::vector<double> grid) : grid_(std::move(grid)) {
  std::sort(grid_.begin(), grid_.end());
  hits_.assign(grid_.size(), 0.0);
}

void CalibrationAccumulator::add(const NextValueDistribution& dist, double truth) {
  const int truth_bin = dist.bin_of(truth);
  for (std::size_t g = 0; g < grid_.size(); ++g)
    if (truth_bin <= dist.quantile_bin(grid_[g])) hits_[g] += 1.0;
  pit_.push_back(dist.cdf_bin(truth_bin));
}

CalibrationReport CalibrationAccumulator::finish() const {
  require(!pit_.empty(), ErrorKind::InvalidArgument, "no samples for the reliability diagram");
  CalibrationReport rep;
  rep.grid = grid_;
  rep.n = pit_.size();
  rep.frequencies = hits_;
  for (double& f : rep.frequencies) f /= static_cast<double>(rep.n);
  rep.ks = ks_statistic(pit_);
  return rep;
}

CalibrationReport reliability_diagram(std::span<const NextValueDistribution> dists, std::span<const double> truths,
                                      const std::vector<double>& grid) {
  require(dists.size() == truths.size(), ErrorKind::InvalidArgument, "distribution/truth counts differ");
  require(!dists.empty(), ErrorKind::InvalidArgument, "no samples for the reliability diagram");
  CalibrationAccumulator acc(grid);
  for (std::size_t i = 0; i < dists.size(); ++i) acc.add(dists[i], truths[i]);
  return acc.finish();
}

std::string CalibrationReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(12) << "p,freq\n";
  for (std::size_t i = 0; i < grid.size(); ++i) os << grid[i] << ',' << frequencies[i] << '\n';
  return os.str();
}

std::string CalibrationReport::ks_json() const {
  nlohmann::json j;
  j["ks"] = ks;
  j["n"] = n;
  return j.dump(2);
}

double ks_statistic(std::span<const double> quantiles) {
  require(!quantiles.empty(), ErrorKind::InvalidArgument, "KS statistic needs at least one value");
  std::vector<double> q(quantiles.begin(), quantiles.end());
  for (double v : q) require(v >= 0.0 && v <= 1.0, ErrorKind::InvalidArgument, "quantiles must lie in [0, 1]");
  std::sort(q.begin(), q.end());
  const auto n = static_cast<double>(q.size());
  double ks = 0.0;
  for (std::size_t i = 0; i < q.size();) {
    std::size_t j = i;
    while (j < q.size() && q[j] == q[i]) ++j;
    // Empirical CDF at q[i] counts every tie.
    ks = std::max(ks, std::abs(static_cast<double>(j) / n - q[i]));
    i = j;
  }
  return ks;
}

double state_coverage(const MatrixXd& states) {
  require(states.rows() >= 2, ErrorKind::InvalidArgument, "state coverage needs at least 2 states");
  double best = 0.0;
  for (Eigen::Index i = 0; i < states.rows(); ++i)
    for (Eigen::Index j = i + 1; j < states.rows(); ++j) best = std::max(best, (states.row(i) - states.row(j)).squaredNorm());
  return std::sqrt(best);
}

double state_coverage(const trajdata::Dataset& dataset) { return state_coverage(trajdata::stack(dataset, trajdata::Block::States)); }

MatrixXd sensitivity_matrix(const StepFunction& f, const VectorXd& state, const VectorXd& action, const VectorXd& scale,
                            double perturbation) {
  const auto ds = state.size();
  const auto da = action.size();
  require(scale.size() == ds + da, ErrorKind::InvalidArgument, "scale must cover every state and action dimension");
  const VectorXd base = f(state, action);
  require(base.size() == ds, ErrorKind::InvalidArgument, "dynamics output has the wrong dimension");
  require(base == f(state, action), ErrorKind::InvalidArgument,
          "dynamics are not deterministic; one-at-a-time sensitivity is undefined");
  MatrixXd out(ds, ds + da);
  for (Eigen::Index i = 0; i < ds + da; ++i) {
    VectorXd s = state, a = action;
    if (i < ds)
      s(i) += perturbation * scale(i);
    else
      a(i - ds) += perturbation * scale(i);
    out.col(i) = (f(s, a) - base).cwiseAbs();
  }
  return out;
}

VectorXd input_scales(const trajdata::Dataset& dataset) {
  const MatrixXd x = trajdata::stack(dataset, trajdata::Block::StatesActions);
  require(x.rows() >= 2, ErrorKind::InvalidArgument, "need at least 2 samples for input scales");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  return ((x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(x.rows() - 1)).sqrt().transpose();
}

}  // namespace dicl::metrics
