#include "dicl/error.hpp"
#include "dicl/policyeval.hpp"
#include "dicl/tokenizer.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace dicl;
using namespace dicl::policyeval;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Circular states with a periodic reward that stays inside its context range.
trajdata::Trajectory periodic_episode(Eigen::Index n) {
  MatrixXd s(n, 2);
  Eigen::VectorXd r(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const double x = 0.1 * static_cast<double>(t);
    s.row(t) << std::cos(x), std::sin(x);
    r(t) = 2.0 + std::cos(x) + 0.5 * std::sin(2.0 * x);
  }
  return trajdata::make_trajectory(s, std::nullopt, r);
}

std::vector<std::vector<double>> columns(const trajdata::Trajectory& e) {
  std::vector<std::vector<double>> out;
  for (Eigen::Index j = 0; j < e.states.cols(); ++j)
    out.emplace_back(e.states.col(j).data(), e.states.col(j).data() + e.length());
  out.emplace_back(e.rewards->data(), e.rewards->data() + e.length());
  return out;
}

HybridEvalSpec spec(Eigen::Index T, Eigen::Index k, Eigen::Index L) {
  HybridEvalSpec s;
  s.context = T;
  s.horizon = k;
  s.episode_length = L;
  return s;
}

}  // namespace

TEST_CASE("k = 0 is an all-real splice") {
  const auto ep = periodic_episode(300);
  const forecast::MarkovBinBackend backend;
  const auto v = hybrid_value(ep, spec(100, 0, 300), backend);
  CHECK(v.rel_err == 0.0);
  CHECK(v.v_hat == v.v_true);
  CHECK(v.predicted_rewards.empty());
  CHECK(v.v_true == doctest::Approx(ep.rewards->sum()).epsilon(1e-14));
}

TEST_CASE("oracle rewards leave only quantisation error") {
  const auto ep = periodic_episode(1000);
  const testing::OracleBackend oracle(columns(ep));
  for (Eigen::Index k : {1, 50, 200, 500}) {
    const Eigen::Index T = 500;
    const auto v = hybrid_value(ep, spec(T, k, 1000), oracle);
    const std::vector<double> ctx(ep.rewards->data(), ep.rewards->data() + T);
    const tokenizer::NumericEncoding enc;
    const double width = enc.bin_width() / tokenizer::fit_rescale(ctx, enc).scale;
    REQUIRE(v.predicted_rewards.size() == static_cast<std::size_t>(k));
    for (Eigen::Index h = 0; h < k; ++h)
      CHECK(std::abs(v.predicted_rewards[static_cast<std::size_t>(h)] - (*ep.rewards)(T + h)) <= 0.5 * width + 1e-12);
    CHECK(v.rel_err < width * static_cast<double>(k) / std::abs(v.v_true));
  }
}

TEST_CASE("constant reward: bounded forecasts, error grows with k") {
  MatrixXd s(200, 1);
  for (Eigen::Index t = 0; t < 200; ++t) s(t, 0) = std::sin(0.3 * static_cast<double>(t));
  const auto ep = trajdata::make_trajectory(s, std::nullopt, Eigen::VectorXd::Constant(200, -1.7));
  const forecast::GaussianContextBackend backend;
  double prev = -1.0;
  for (Eigen::Index k : {0, 10, 40, 100}) {
    const auto v = hybrid_value(ep, spec(100, k, 200), backend);
    CHECK(v.rel_err <= 1.7 * static_cast<double>(k) / std::abs(v.v_true));
    CHECK(v.rel_err >= prev);
    prev = v.rel_err;
  }
}

TEST_CASE("zero value reports the absolute error") {
  MatrixXd s(60, 1);
  Eigen::VectorXd r(60);
  for (Eigen::Index t = 0; t < 60; ++t) {
    s(t, 0) = std::cos(0.5 * static_cast<double>(t));
    r(t) = t % 2 ? 1.0 : -1.0;
  }
  const auto ep = trajdata::make_trajectory(s, std::nullopt, r);
  const forecast::MarkovBinBackend backend;
  const auto v = hybrid_value(ep, spec(30, 11, 60), backend);
  CHECK(v.v_true == 0.0);
  CHECK(!v.relative_defined);
  CHECK(v.rel_err == v.abs_err);
}

TEST_CASE("discounted mode weights by gamma") {
  const auto ep = periodic_episode(50);
  auto sp = spec(20, 0, 50);
  sp.discount = Discount::Gamma;
  sp.gamma = 0.9;
  double expected = 0.0;
  for (Eigen::Index t = 0; t < 50; ++t) expected += std::pow(0.9, static_cast<double>(t)) * (*ep.rewards)(t);
  CHECK(hybrid_value(ep, sp, forecast::MarkovBinBackend{}).v_true == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("sweep covers feasible cells in order and ignores jobs") {
  const std::vector<trajdata::Trajectory> eps{periodic_episode(120), periodic_episode(120)};
  const forecast::MarkovBinBackend backend;
  const auto a = hybrid_sweep(eps, {40, 100}, {0, 10, 30}, spec(0, 0, 120), backend, 1);
  const auto b = hybrid_sweep(eps, {40, 100}, {0, 10, 30}, spec(0, 0, 120), backend, 2);
  CHECK(a.size() == 2 * 5);
  CHECK(to_csv(a) == to_csv(b));
  CHECK(a[4].context == 100);
  CHECK(a[4].horizon == 10);
  CHECK(to_csv(a).rfind("episode,T,k,v_hat,v_true,rel_err,relative_defined\n", 0) == 0);
}

TEST_CASE("argument checks") {
  const auto ep = periodic_episode(100);
  const forecast::MarkovBinBackend backend;
  CHECK_THROWS_AS(hybrid_value(ep, spec(60, 50, 100), backend), Error);
  CHECK_THROWS_AS(hybrid_value(ep, spec(10, 10, 200), backend), Error);
  CHECK_THROWS_AS(hybrid_value(trajdata::make_trajectory(ep.states), spec(10, 10, 100), backend), Error);
  CHECK_THROWS_AS(hybrid_value(ep, spec(1, 5, 100), backend), Error);
}
