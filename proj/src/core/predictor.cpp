#include "dicl/predictor.hpp"

#include "dicl/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <future>

namespace dicl::predict {

using disentangle::PcaMap;
using forecast::TokenizedSeries;
using tokenizer::SeriesRescale;

std::string to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::Vicl:
      return "vicl";
    case MethodKind::DiclS:
      return "dicl_s";
    case MethodKind::DiclSA:
      return "dicl_sa";
  }
  return "?";
}

std::string to_string(Sampling s) {
  switch (s) {
    case Sampling::Mean:
      return "mean";
    case Sampling::Mode:
      return "mode";
    case Sampling::Sample:
      return "sample";
  }
  return "?";
}

MethodKind method_kind_from_string(const std::string& name) {
  if (name == "vicl") return MethodKind::Vicl;
  if (name == "dicl_s") return MethodKind::DiclS;
  if (name == "dicl_sa") return MethodKind::DiclSA;
  fail(ErrorKind::Config, "unknown method '" + name + "' (expected vicl, dicl_s or dicl_sa)");
}

Sampling sampling_from_string(const std::string& name) {
  if (name == "mean") return Sampling::Mean;
  if (name == "mode") return Sampling::Mode;
  if (name == "sample") return Sampling::Sample;
  fail(ErrorKind::Config, "unknown sampling '" + name + "' (expected mean, mode or sample)");
}

void DiclMethod::validate() const {
  encoding.validate();
  require(n_components >= 0, ErrorKind::InvalidArgument, "component count must be nonnegative");
  require(lower_quantile >= 0.0 && lower_quantile <= upper_quantile && upper_quantile <= 1.0,
          ErrorKind::InvalidArgument, "quantile band must satisfy 0 <= lower <= upper <= 1");
  require(interval_samples >= 1, ErrorKind::InvalidArgument, "interval_samples must be positive");
}

FeatureLayout layout_for(const Trajectory& traj, const DiclMethod& method) {
  FeatureLayout l;
  l.states = traj.state_dim();
  if (method.kind == MethodKind::DiclSA) {
    require(traj.actions.has_value(), ErrorKind::InvalidArgument, "dicl_sa needs actions in the context");
    l.actions = traj.action_dim();
  }
  if (method.include_reward) {
    require(traj.rewards.has_value(), ErrorKind::InvalidArgument, "include_reward needs rewards in the context");
    l.reward = true;
  }
  return l;
}

MatrixXd feature_matrix(const Trajectory& traj, const DiclMethod& method) {
  const auto l = layout_for(traj, method);
  MatrixXd f(traj.length(), l.size());
  f.leftCols(l.states) = traj.states;
  if (l.actions) f.middleCols(l.states, l.actions) = *traj.actions;
  if (l.reward) f.col(l.size() - 1) = *traj.rewards;
  return f;
}

namespace {

// Feature space <-> forecast series.
class SeriesMap {
 public:
  SeriesMap(const MatrixXd& context, const DiclMethod& method) {
    if (method.kind == MethodKind::Vicl) return;
    const auto c = method.n_components > 0 ? method.n_components : disentangle::default_component_count(context.cols());
    require(c <= context.cols(), ErrorKind::InvalidArgument,
            "n_components " + std::to_string(c) + " exceeds feature count " + std::to_string(context.cols()));
    pca_ = disentangle::fit_pca(context, c, disentangle::PcaOptions{method.standardize});
  }

  MatrixXd to_series(const MatrixXd& features) const { return pca_ ? pca_->transform(features) : features; }
  MatrixXd to_features(const MatrixXd& series) const { return pca_ ? pca_->inverse(series) : series; }
  bool disentangled() const { return pca_.has_value(); }

 private:
  std::optional<PcaMap> pca_;
};

std::vector<std::vector<double>> run_backend(const std::vector<TokenizedSeries>& series,
                                             const std::vector<std::size_t>& positions, const ForecastBackend& backend,
                                             int jobs) {
  // Returns rows [series][position-major flattened later].
  std::vector<std::vector<std::vector<double>>> per_series(series.size());
  if (jobs <= 1 || series.size() <= 1) {
    for (std::size_t j = 0; j < series.size(); ++j) per_series[j] = backend.next_bin_probs(series[j], positions);
  } else {
    const std::size_t width = static_cast<std::size_t>(jobs);
    for (std::size_t start = 0; start < series.size(); start += width) {
      const std::size_t stop = std::min(series.size(), start + width);
      std::vector<std::future<std::vector<std::vector<double>>>> pending;
      for (std::size_t j = start; j < stop; ++j)
        pending.push_back(std::async(std::launch::async, [&, j] { return backend.next_bin_probs(series[j], positions); }));
      for (std::size_t j = start; j < stop; ++j) per_series[j] = pending[j - start].get();
    }
  }
  // Flatten as [position][series].
  std::vector<std::vector<double>> out;
  out.reserve(positions.size() * series.size());
  for (std::size_t p = 0; p < positions.size(); ++p)
    for (std::size_t j = 0; j < series.size(); ++j) {
      require(per_series[j].size() == positions.size(), ErrorKind::Backend,
              backend.name() + " returned the wrong number of rows");
      out.push_back(std::move(per_series[j][p]));
    }
  return out;
}

double pick(const NextValueDistribution& d, Sampling s, std::mt19937_64& rng) {
  switch (s) {
    case Sampling::Mean:
      return d.mean();
    case Sampling::Mode:
      return d.mode();
    case Sampling::Sample:
      return d.sample(rng);
  }
  return d.mode();
}

ForecastResult assemble(const FeatureLayout& layout, std::vector<NextValueDistribution> dists, const SeriesMap& map,
                        const DiclMethod& method, std::mt19937_64& pick_rng, std::mt19937_64& band_rng) {
  const auto m = static_cast<Eigen::Index>(dists.size());
  MatrixXd point(1, m), mean(1, m), mode(1, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto& d = dists[static_cast<std::size_t>(j)];
    point(0, j) = pick(d, method.sampling, pick_rng);
    mean(0, j) = d.mean();
    mode(0, j) = d.mode();
  }
  ForecastResult r;
  r.layout = layout;
  r.point = map.to_features(point).row(0).transpose();
  r.mean = map.to_features(mean).row(0).transpose();
  r.mode = map.to_features(mode).row(0).transpose();
  if (!map.disentangled()) {
    r.lower.resize(m);
    r.upper.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      r.lower(j) = dists[static_cast<std::size_t>(j)].quantile(method.lower_quantile);
      r.upper(j) = dists[static_cast<std::size_t>(j)].quantile(method.upper_quantile);
    }
  } else {
    // Components are forecast independently, so joint draws are products of
    // the per-component categoricals.
    const auto n = static_cast<Eigen::Index>(method.interval_samples);
    MatrixXd draws(n, m);
    for (Eigen::Index s = 0; s < n; ++s)
      for (Eigen::Index j = 0; j < m; ++j) draws(s, j) = dists[static_cast<std::size_t>(j)].sample(band_rng);
    const MatrixXd feats = map.to_features(draws);
    const auto f = feats.cols();
    r.lower.resize(f);
    r.upper.resize(f);
    std::vector<double> col(static_cast<std::size_t>(n));
    auto empirical_quantile = [&](double p) {
      const auto idx = static_cast<std::size_t>(std::clamp<double>(std::ceil(p * static_cast<double>(n)) - 1.0, 0.0,
                                                                   static_cast<double>(n - 1)));
      std::nth_element(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(idx), col.end());
      return col[idx];
    };
    for (Eigen::Index k = 0; k < f; ++k) {
      for (Eigen::Index s = 0; s < n; ++s) col[static_cast<std::size_t>(s)] = feats(s, k);
      r.lower(k) = empirical_quantile(method.lower_quantile);
      r.upper(k) = empirical_quantile(method.upper_quantile);
    }
  }
  r.distributions = std::move(dists);
  return r;
}

constexpr std::uint64_t kBandStream = 0x9E3779B97F4A7C15ULL;

}  // namespace

std::vector<ForecastResult> rollout(const Trajectory& context, Eigen::Index horizon, const DiclMethod& method,
                                    const ForecastBackend& backend, const RolloutOptions& options) {
  method.validate();
  context.validate();
  require(horizon >= 1, ErrorKind::InvalidArgument, "horizon must be at least 1");
  require(context.length() >= 2, ErrorKind::InvalidArgument, "context needs at least 2 steps");
  const auto layout = layout_for(context, method);
  if (options.oracle_actions) {
    require(method.kind == MethodKind::DiclSA, ErrorKind::InvalidArgument, "oracle actions only apply to dicl_sa");
    require(options.oracle_actions->rows() >= horizon && options.oracle_actions->cols() == layout.actions,
            ErrorKind::InvalidArgument, "oracle actions must be [horizon x d_a]");
  }

  MatrixXd history = feature_matrix(context, method);
  const SeriesMap map(history, method);
  MatrixXd series = map.to_series(history);
  const auto m = series.cols();
  const auto& enc = method.encoding;

  std::vector<SeriesRescale> rescales;
  for (Eigen::Index j = 0; j < m; ++j) {
    const VectorXd col = series.col(j);
    rescales.push_back(tokenizer::fit_rescale(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), enc));
  }

  std::mt19937_64 pick_rng(method.seed);
  std::mt19937_64 band_rng(method.seed ^ kBandStream);
  std::vector<ForecastResult> out;
  out.reserve(static_cast<std::size_t>(horizon));

  for (Eigen::Index step = 0; step < horizon; ++step) {
    const auto n = static_cast<std::size_t>(series.rows());
    std::vector<TokenizedSeries> toks;
    toks.reserve(static_cast<std::size_t>(m));
    for (Eigen::Index j = 0; j < m; ++j) {
      const VectorXd col = series.col(j);
      toks.push_back({tokenizer::encode_series(std::span<const double>(col.data(), n), rescales[static_cast<std::size_t>(j)], enc).bins,
                      rescales[static_cast<std::size_t>(j)], enc});
    }
    const std::vector<std::size_t> last{n - 1};
    auto rows = run_backend(toks, last, backend, method.jobs);
    std::vector<NextValueDistribution> dists;
    dists.reserve(rows.size());
    for (std::size_t j = 0; j < rows.size(); ++j) dists.emplace_back(std::move(rows[j]), rescales[j], enc);

    auto result = assemble(layout, std::move(dists), map, method, pick_rng, band_rng);
    if (options.oracle_actions)
      result.point.segment(layout.states, layout.actions) = options.oracle_actions->row(step).transpose();

    history.conservativeResize(history.rows() + 1, Eigen::NoChange);
    history.row(history.rows() - 1) = result.point.transpose();
    MatrixXd next_series = map.to_series(history.bottomRows(1));
    series.conservativeResize(series.rows() + 1, Eigen::NoChange);
    series.row(series.rows() - 1) = next_series.row(0);

    // A prediction saturating the bin range triggers a refit of that series.
    const auto top = static_cast<int>(enc.bin_count() - 1);
    for (Eigen::Index j = 0; j < m; ++j) {
      auto& rs = rescales[static_cast<std::size_t>(j)];
      const int b = tokenizer::encode_value(series(series.rows() - 1, j), rs, enc);
      if (b == 0 || b == top) {
        const VectorXd col = series.col(j);
        rs = tokenizer::fit_rescale(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), enc);
      }
    }
    out.push_back(std::move(result));
  }
  return out;
}

ForecastResult predict_next(const Trajectory& context, const DiclMethod& method, const ForecastBackend& backend) {
  return std::move(rollout(context, 1, method, backend).front());
}

std::vector<ForecastResult> one_step_forecasts(const Trajectory& traj, const DiclMethod& method,
                                               const ForecastBackend& backend, bool include_last) {
  method.validate();
  traj.validate();
  require(traj.length() >= 2, ErrorKind::InvalidArgument, "trajectory needs at least 2 steps");
  const auto layout = layout_for(traj, method);
  const MatrixXd feats = feature_matrix(traj, method);
  const SeriesMap map(feats, method);
  const MatrixXd series = map.to_series(feats);
  const auto m = series.cols();
  const auto n = static_cast<std::size_t>(series.rows());
  const auto& enc = method.encoding;

  std::vector<TokenizedSeries> toks;
  for (Eigen::Index j = 0; j < m; ++j) {
    const VectorXd col = series.col(j);
    const std::span<const double> view(col.data(), n);
    const auto rs = tokenizer::fit_rescale(view, enc);
    toks.push_back({tokenizer::encode_series(view, rs, enc).bins, rs, enc});
  }
  std::vector<std::size_t> positions(include_last ? n : n - 1);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
  auto rows = run_backend(toks, positions, backend, method.jobs);

  std::mt19937_64 pick_rng(method.seed);
  std::mt19937_64 band_rng(method.seed ^ kBandStream);
  std::vector<ForecastResult> out;
  out.reserve(positions.size());
  for (std::size_t p = 0; p < positions.size(); ++p) {
    std::vector<NextValueDistribution> dists;
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto idx = p * static_cast<std::size_t>(m) + static_cast<std::size_t>(j);
      dists.emplace_back(std::move(rows[idx]), toks[static_cast<std::size_t>(j)].rescale, enc);
    }
    out.push_back(assemble(layout, std::move(dists), map, method, pick_rng, band_rng));
  }
  return out;
}

MatrixXd points(const std::vector<ForecastResult>& results) {
  if (results.empty()) return {};
  MatrixXd out(static_cast<Eigen::Index>(results.size()), results.front().point.size());
  for (std::size_t i = 0; i < results.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = results[i].point.transpose();
  return out;
}

std::string to_json(const std::vector<ForecastResult>& results, bool include_probs) {
  using nlohmann::json;
  auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json steps = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    json s;
    s["step"] = i;
    s["point"] = vec(r.point);
    s["mean"] = vec(r.mean);
    s["mode"] = vec(r.mode);
    s["lower"] = vec(r.lower);
    s["upper"] = vec(r.upper);
    json ds = json::array();
    for (const auto& d : r.distributions) {
      json dj;
      dj["mean"] = d.mean();
      dj["mode"] = d.mode();
      dj["variance"] = d.variance();
      dj["rescale"] = {{"source_min", d.rescale().source_min}, {"source_max", d.rescale().source_max}};
      if (include_probs) dj["probs"] = d.probs();
      ds.push_back(std::move(dj));
    }
    s["distributions"] = std::move(ds);
    steps.push_back(std::move(s));
  }
  json root;
  if (!results.empty()) {
    const auto& l = results.front().layout;
    root["layout"] = {{"states", l.states}, {"actions", l.actions}, {"reward", l.reward}};
  }
  root["steps"] = std::move(steps);
  return root.dump(1);
}

}  // namespace dicl::predict
