#include "dicl/disentangle.hpp"
#include "dicl/error.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace dicl;
using namespace dicl::disentangle;

namespace {

MatrixXd gaussian(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n01(rng);
  return x;
}

// Correlated data: independent sources mixed by a random matrix, plus offsets.
MatrixXd mixed(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  const MatrixXd src = gaussian(n, d, seed);
  const MatrixXd mix = gaussian(d, d, seed + 1);
  MatrixXd x = src * mix;
  for (Eigen::Index j = 0; j < d; ++j) x.col(j).array() += 3.0 * static_cast<double>(j) - 1.0;
  return x;
}

double max_off_diagonal(const MatrixXd& c) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index j = 0; j < c.cols(); ++j)
      if (i != j) m = std::max(m, std::abs(c(i, j)));
  return m;
}

PcaOptions raw() {
  PcaOptions o;
  o.standardize = false;
  return o;
}

}  // namespace

TEST_CASE("axis-aligned anisotropic data recovers the axes") {
  MatrixXd x = gaussian(20000, 3, 1);
  x.col(0) *= 1.0;
  x.col(1) *= 4.0;
  x.col(2) *= 2.0;
  const auto map = fit_pca(x, 3, raw());
  // Largest variance first: axis 1, then 2, then 0.
  CHECK(std::abs(map.components(0, 1)) > 0.999);
  CHECK(std::abs(map.components(1, 2)) > 0.999);
  CHECK(std::abs(map.components(2, 0)) > 0.999);
  CHECK(map.explained_variance(0) == doctest::Approx(16.0).epsilon(0.05));
}

TEST_CASE("one feature is centring only") {
  MatrixXd x(4, 1);
  x << 1, 2, 3, 6;
  const auto map = fit_pca(x, 1, raw());
  CHECK(map.components(0, 0) == 1.0);
  const MatrixXd z = map.transform(x);
  CHECK(z(0, 0) == doctest::Approx(-2.0));
  CHECK(z(3, 0) == doctest::Approx(3.0));
}

TEST_CASE("full-rank round trip, orthonormality and decorrelation") {
  for (bool standardize : {true, false}) {
    PcaOptions opt;
    opt.standardize = standardize;
    const MatrixXd x = mixed(300, 6, 7);
    const auto map = fit_pca(x, 6, opt);
    const MatrixXd z = map.transform(x);
    CHECK((map.inverse(z) - x).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((map.components * map.components.transpose() - MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(max_off_diagonal(covariance_matrix(z)) < 1e-8);
    for (Eigen::Index k = 1; k < 6; ++k) CHECK(map.explained_variance(k) <= map.explained_variance(k - 1));
  }
}

TEST_CASE("explained variance sums to the covariance trace") {
  const MatrixXd x = mixed(200, 5, 3);
  const auto map = fit_pca(x, 5, raw());
  CHECK(std::abs(map.explained_variance.sum() - covariance_matrix(x).trace()) < 1e-8);
}

TEST_CASE("truncated reconstruction error equals the discarded eigenvalues") {
  const MatrixXd x = mixed(500, 6, 11);
  const Eigen::Index n = x.rows();
  // Oracle eigenvalues from the singular values of the centred data.
  const MatrixXd xc = x.rowwise() - x.colwise().mean();
  Eigen::JacobiSVD<MatrixXd> svd(xc);
  const VectorXd lambda = svd.singularValues().array().square() / static_cast<double>(n - 1);
  for (Eigen::Index c = 1; c < 6; ++c) {
    const auto map = fit_pca(x, c, raw());
    const MatrixXd err = map.inverse(map.transform(x)) - x;
    const double mse = err.squaredNorm() / static_cast<double>(n - 1);
    const double discarded = lambda.tail(6 - c).sum();
    CHECK(std::abs(mse - discarded) <= 1e-6 * discarded);
  }
}

TEST_CASE("mean row maps to zero") {
  const MatrixXd x = mixed(50, 4, 5);
  const auto map = fit_pca(x, 2);
  const MatrixXd z = map.transform(map.mean.transpose());
  CHECK(z.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("covariance and correlation") {
  MatrixXd x(5, 2);
  x << 1, 1, 2, 2, 4, 4, 3, 3, 9, 9;
  CHECK(correlation_matrix(x)(0, 1) == doctest::Approx(1.0));
  const MatrixXd big = gaussian(100000, 3, 17);
  CHECK(max_off_diagonal(correlation_matrix(big)) < 0.02);
  const MatrixXd c = covariance_matrix(mixed(40, 4, 2));
  CHECK((c - c.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(c);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
  CHECK_THROWS_AS(covariance_matrix(MatrixXd::Zero(1, 3)), Error);
}

TEST_CASE("rank-deficient data names the attainable rank") {
  MatrixXd x = gaussian(100, 3, 4);
  x.col(2) = x.col(0) + x.col(1);
  CHECK(attainable_rank(x, raw()) == 2);
  try {
    fit_pca(x, 3, raw());
    FAIL("expected a rank error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("rank 2") != std::string::npos);
  }
  CHECK_NOTHROW(fit_pca(x, 2, raw()));
}

TEST_CASE("sign convention, determinism and JSON") {
  const MatrixXd x = mixed(80, 5, 9);
  const auto a = fit_pca(x, 3);
  const auto b = fit_pca(x, 3);
  CHECK(a.components == b.components);
  CHECK(a.explained_variance == b.explained_variance);
  for (Eigen::Index k = 0; k < 3; ++k) {
    Eigen::Index arg;
    a.components.row(k).cwiseAbs().maxCoeff(&arg);
    CHECK(a.components(k, arg) > 0.0);
  }
  const auto back = PcaMap::from_json(a.to_json());
  CHECK((back.components - a.components).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.mean - a.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.scale - a.scale).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(PcaMap::from_json("{\"mean\": 3}"), Error);
}

TEST_CASE("argument checks") {
  CHECK(default_component_count(5) == 3);
  CHECK(default_component_count(1) == 1);
  const MatrixXd x = mixed(20, 3, 1);
  CHECK_THROWS_AS(fit_pca(x, 0), Error);
  CHECK_THROWS_AS(fit_pca(x, 4), Error);
  CHECK_THROWS_AS(fit_pca(x.topRows(1), 1), Error);
  const auto map = fit_pca(x, 2);
  CHECK_THROWS_AS(map.transform(MatrixXd::Zero(2, 2)), Error);
  CHECK_THROWS_AS(map.inverse(MatrixXd::Zero(2, 3)), Error);
}
