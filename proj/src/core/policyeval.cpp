#include "dicl/policyeval.hpp"

#include "dicl/error.hpp"

#include <cmath>
#include <future>
#include <iomanip>
#include <sstream>

namespace dicl::policyeval {

void HybridEvalSpec::validate() const {
  require(context >= 0 && horizon >= 0, ErrorKind::InvalidArgument, "context and horizon must be >= 0");
  require(episode_length >= 1, ErrorKind::InvalidArgument, "episode length must be >= 1");
  require(context + horizon <= episode_length, ErrorKind::InvalidArgument, "need T + k <= L");
  require(horizon == 0 || context >= 2, ErrorKind::InvalidArgument, "forecasting needs at least 2 context steps");
  if (discount == Discount::Gamma)
    require(gamma > 0.0 && gamma <= 1.0, ErrorKind::InvalidArgument, "gamma must lie in (0, 1]");
  method.validate();
}

HybridValue hybrid_value(const trajdata::Trajectory& episode, const HybridEvalSpec& spec,
                         const forecast::ForecastBackend& backend) {
  spec.validate();
  episode.validate();
  require(episode.rewards.has_value(), ErrorKind::InvalidArgument, "hybrid evaluation needs rewards");
  require(episode.length() >= spec.episode_length, ErrorKind::InvalidArgument,
          "episode is shorter than the evaluation length");
  const auto T = spec.context;
  const auto k = spec.horizon;
  const auto L = spec.episode_length;
  const Eigen::VectorXd& r = *episode.rewards;

  HybridValue out;
  if (k > 0) {
    predict::DiclMethod m = spec.method;
    m.include_reward = true;
    const auto steps = predict::rollout(episode.slice(0, T), k, m, backend);
    for (const auto& s : steps) out.predicted_rewards.push_back(*s.reward());
  }

  double weight = 1.0;
  for (Eigen::Index t = 0; t < L; ++t) {
    const bool forecast = t >= T && t < T + k;
    const double rt = forecast ? out.predicted_rewards[static_cast<std::size_t>(t - T)] : r(t);
    out.v_hat += weight * rt;
    out.v_true += weight * r(t);
    if (spec.discount == Discount::Gamma) weight *= spec.gamma;
  }
  out.abs_err = std::abs(out.v_hat - out.v_true);
  if (out.v_true == 0.0) {
    out.relative_defined = false;
    out.rel_err = out.abs_err;
  } else {
    out.rel_err = out.abs_err / std::abs(out.v_true);
  }
  return out;
}

std::vector<SweepRow> hybrid_sweep(const std::vector<trajdata::Trajectory>& episodes,
                                   const std::vector<Eigen::Index>& contexts, const std::vector<Eigen::Index>& horizons,
                                   const HybridEvalSpec& base, const forecast::ForecastBackend& backend, int jobs) {
  require(jobs >= 1, ErrorKind::InvalidArgument, "jobs must be >= 1");
  auto one = [&](std::size_t e) {
    std::vector<SweepRow> rows;
    for (auto T : contexts)
      for (auto k : horizons) {
        if (T + k > base.episode_length) continue;
        HybridEvalSpec spec = base;
        spec.context = T;
        spec.horizon = k;
        rows.push_back({e, T, k, hybrid_value(episodes[e], spec, backend)});
      }
    return rows;
  };
  std::vector<std::vector<SweepRow>> per(episodes.size());
  for (std::size_t begin = 0; begin < episodes.size(); begin += static_cast<std::size_t>(jobs)) {
    std::vector<std::future<std::vector<SweepRow>>> futs;
    const std::size_t end = std::min(episodes.size(), begin + static_cast<std::size_t>(jobs));
    for (std::size_t e = begin; e < end; ++e) futs.push_back(std::async(std::launch::async, one, e));
    for (std::size_t e = begin; e < end; ++e) per[e] = futs[e - begin].get();
  }
  std::vector<SweepRow> out;
  for (auto& p : per) out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::string to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(12) << "episode,T,k,v_hat,v_true,rel_err,relative_defined\n";
  for (const auto& r : rows)
    os << r.episode << ',' << r.context << ',' << r.horizon << ',' << r.value.v_hat << ',' << r.value.v_true << ','
       << r.value.rel_err << ',' << (r.value.relative_defined ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace dicl::policyeval
