#include "dicl/forecaster.hpp"

#include "dicl/error.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace dicl::forecast {

// ---------------------------------------------------------------------------
// NextValueDistribution

NextValueDistribution::NextValueDistribution(std::vector<double> probs, SeriesRescale rescale, NumericEncoding enc)
    : probs_(std::move(probs)), rescale_(rescale), enc_(enc) {
  require(probs_.size() == enc_.bin_count(), ErrorKind::InvalidArgument,
          "distribution needs " + std::to_string(enc_.bin_count()) + " bins, got " + std::to_string(probs_.size()));
  double total = 0.0;
  for (double p : probs_) {
    require(std::isfinite(p) && p >= 0.0, ErrorKind::Numerical, "distribution has a negative or non-finite entry");
    total += p;
  }
  require(total > 0.0, ErrorKind::Numerical, "distribution has zero mass");
  if (std::abs(total - 1.0) > 1e-12)
    for (double& p : probs_) p /= total;
  cumulative_.resize(probs_.size());
  std::partial_sum(probs_.begin(), probs_.end(), cumulative_.begin());
  cumulative_.back() = 1.0;
}

NextValueDistribution NextValueDistribution::point_mass(int bin, SeriesRescale rescale, NumericEncoding enc) {
  std::vector<double> p(enc.bin_count(), 0.0);
  p.at(static_cast<std::size_t>(bin)) = 1.0;
  return NextValueDistribution(std::move(p), rescale, enc);
}

double NextValueDistribution::bin_value(int bin) const { return tokenizer::bin_center(bin, rescale_, enc_); }

int NextValueDistribution::bin_of(double value) const { return tokenizer::encode_value(value, rescale_, enc_); }

double NextValueDistribution::mean() const {
  double m = 0.0;
  for (std::size_t b = 0; b < probs_.size(); ++b)
    if (probs_[b] > 0.0) m += probs_[b] * bin_value(static_cast<int>(b));
  return m;
}

double NextValueDistribution::variance() const {
  const double m = mean();
  double v = 0.0;
  for (std::size_t b = 0; b < probs_.size(); ++b) {
    if (probs_[b] <= 0.0) continue;
    const double d = bin_value(static_cast<int>(b)) - m;
    v += probs_[b] * d * d;
  }
  return v;
}

int NextValueDistribution::mode_bin() const {
  return static_cast<int>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

int NextValueDistribution::quantile_bin(double p) const {
  require(p >= 0.0 && p <= 1.0, ErrorKind::InvalidArgument, "quantile level must lie in [0, 1]");
  if (p <= 0.0) {
    auto it = std::find_if(probs_.begin(), probs_.end(), [](double q) { return q > 0.0; });
    return static_cast<int>(it - probs_.begin());
  }
  auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), p);
  if (it == cumulative_.end()) --it;
  return static_cast<int>(it - cumulative_.begin());
}

double NextValueDistribution::cdf(double value) const {
  // Bin centres are increasing in the bin id, so the atoms at or below
  // `value` form a prefix.
  const double y = rescale_.to_rescaled(value);
  const double w = enc_.bin_width();
  const double last = std::floor(y / w - 0.5 + 1e-12);
  if (last < 0.0) return 0.0;
  if (last >= static_cast<double>(probs_.size() - 1)) return 1.0;
  return cumulative_[static_cast<std::size_t>(last)];
}

double NextValueDistribution::cdf_bin(int bin) const {
  if (bin < 0) return 0.0;
  if (static_cast<std::size_t>(bin) >= cumulative_.size()) return 1.0;
  return cumulative_[static_cast<std::size_t>(bin)];
}

int NextValueDistribution::sample_bin(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng);
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), x);
  if (it == cumulative_.end()) --it;
  return static_cast<int>(it - cumulative_.begin());
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  require(temperature > 0.0, ErrorKind::InvalidArgument, "temperature must be positive");
  double top = -std::numeric_limits<double>::infinity();
  for (double l : logits) {
    require(!std::isnan(l) && l != std::numeric_limits<double>::infinity(), ErrorKind::Numerical,
            "logits must be finite or -inf");
    top = std::max(top, l);
  }
  require(std::isfinite(top), ErrorKind::Numerical, "all logits are -inf");
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - top) / temperature);
    total += p[i];
  }
  for (double& q : p) q /= total;
  return p;
}

NextValueDistribution logits_to_distribution(std::span<const double> logits, double temperature,
                                             const SeriesRescale& rescale, const NumericEncoding& enc) {
  require(logits.size() == enc.bin_count(), ErrorKind::InvalidArgument,
          "expected " + std::to_string(enc.bin_count()) + " logits, got " + std::to_string(logits.size()));
  return NextValueDistribution(softmax(logits, temperature), rescale, enc);
}

// ---------------------------------------------------------------------------
// backends

std::string to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::LlmHttp:
      return "llm_http";
    case BackendKind::GaussianContext:
      return "gaussian_context";
    case BackendKind::MarkovBin:
      return "markov_bin";
  }
  return "?";
}

BackendKind backend_kind_from_string(const std::string& name) {
  if (name == "llm_http") return BackendKind::LlmHttp;
  if (name == "gaussian_context") return BackendKind::GaussianContext;
  if (name == "markov_bin") return BackendKind::MarkovBin;
  fail(ErrorKind::Config, "unknown backend '" + name + "' (expected llm_http, gaussian_context or markov_bin)");
}

std::shared_ptr<const ForecastBackend> make_backend(const ForecastBackendSpec& spec) {
  switch (spec.kind) {
    case BackendKind::LlmHttp:
      return std::make_shared<LlmHttpBackend>(spec);
    case BackendKind::GaussianContext:
      return std::make_shared<GaussianContextBackend>(spec.window);
    case BackendKind::MarkovBin:
      return std::make_shared<MarkovBinBackend>(spec.smoothing, spec.min_count);
  }
  fail(ErrorKind::Config, "unknown backend kind");
}

namespace {

std::vector<std::size_t> resolve_positions(std::size_t length, std::span<const std::size_t> positions) {
  std::vector<std::size_t> out;
  if (positions.empty()) {
    out.resize(length);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  for (auto p : positions) {
    require(p < length, ErrorKind::InvalidArgument,
            "position " + std::to_string(p) + " outside series of length " + std::to_string(length));
    out.push_back(p);
  }
  return out;
}

}  // namespace

MarkovBinBackend::MarkovBinBackend(double smoothing, std::size_t min_count)
    : smoothing_(smoothing), min_count_(std::max<std::size_t>(min_count, 1)) {
  require(smoothing >= 0.0, ErrorKind::InvalidArgument, "markov smoothing must be nonnegative");
}

std::vector<std::vector<double>> MarkovBinBackend::next_bin_probs(const TokenizedSeries& series,
                                                                  std::span<const std::size_t> positions) const {
  const auto& bins = series.bins;
  require(!bins.empty(), ErrorKind::InvalidArgument, "empty series");
  const auto n_bins = series.enc.bin_count();
  const auto wanted = resolve_positions(bins.size(), positions);
  const std::size_t last = *std::max_element(wanted.begin(), wanted.end());

  // transitions[b] holds the successors observed after bin b, in time order.
  std::map<int, std::vector<int>> transitions;
  std::set<std::size_t> wanted_set(wanted.begin(), wanted.end());
  std::map<std::size_t, std::vector<double>> by_position;

  std::vector<double> counts(n_bins);
  for (std::size_t i = 0; i <= last; ++i) {
    if (i >= 1) transitions[bins[i - 1]].push_back(bins[i]);
    if (!wanted_set.count(i)) continue;

    std::fill(counts.begin(), counts.end(), 0.0);
    double total = 0.0;
    const int here = bins[i];
    if (transitions.empty()) {
      counts[static_cast<std::size_t>(here)] = 1.0;
      total = 1.0;
    } else {
      // Pool rows at increasing bin distance until min_count successors are seen.
      auto hi = transitions.lower_bound(here);
      auto lo = std::make_reverse_iterator(hi);
      while (total < static_cast<double>(min_count_) && (hi != transitions.end() || lo != transitions.rend())) {
        const int d_hi = hi != transitions.end() ? hi->first - here : std::numeric_limits<int>::max();
        const int d_lo = lo != transitions.rend() ? here - lo->first : std::numeric_limits<int>::max();
        const int d = std::min(d_hi, d_lo);
        if (d_hi == d) {
          for (int nb : hi->second) counts[static_cast<std::size_t>(nb)] += 1.0;
          total += static_cast<double>(hi->second.size());
          ++hi;
        }
        if (d_lo == d) {
          for (int nb : lo->second) counts[static_cast<std::size_t>(nb)] += 1.0;
          total += static_cast<double>(lo->second.size());
          ++lo;
        }
      }
    }
    const double denom = total + smoothing_ * static_cast<double>(n_bins);
    std::vector<double> p(n_bins);
    for (std::size_t b = 0; b < n_bins; ++b) p[b] = (counts[b] + smoothing_) / denom;
    by_position.emplace(i, std::move(p));
  }

  std::vector<std::vector<double>> out;
  out.reserve(wanted.size());
  for (auto pos : wanted) out.push_back(by_position.at(pos));
  return out;
}

GaussianContextBackend::GaussianContextBackend(std::size_t window) : window_(window) {}

std::vector<double> GaussianContextBackend::discretize(double mean, double stddev, const NumericEncoding& enc) {
  const auto n = enc.bin_count();
  const double w = enc.bin_width();
  auto cdf = [&](double x) { return 0.5 * std::erfc(-(x - mean) / (stddev * std::sqrt(2.0))); };
  std::vector<double> p(n);
  double prev = 0.0;  // folds the lower tail into bin 0
  for (std::size_t b = 0; b + 1 < n; ++b) {
    const double c = cdf(static_cast<double>(b + 1) * w);
    p[b] = std::max(c - prev, 0.0);
    prev = c;
  }
  p[n - 1] = std::max(1.0 - prev, 0.0);
  double total = std::accumulate(p.begin(), p.end(), 0.0);
  if (!(total > 0.0)) {
    // Numerically degenerate: collapse onto the bin holding the mean.
    std::fill(p.begin(), p.end(), 0.0);
    const double idx = std::clamp(std::floor(mean / w), 0.0, static_cast<double>(n - 1));
    p[static_cast<std::size_t>(idx)] = 1.0;
    return p;
  }
  for (double& q : p) q /= total;
  return p;
}

std::vector<std::vector<double>> GaussianContextBackend::next_bin_probs(const TokenizedSeries& series,
                                                                        std::span<const std::size_t> positions) const {
  const auto& bins = series.bins;
  require(!bins.empty(), ErrorKind::InvalidArgument, "empty series");
  const auto wanted = resolve_positions(bins.size(), positions);
  const double w = series.enc.bin_width();

  // Prefix sums of bin-centre values and their squares.
  std::vector<double> s1(bins.size() + 1, 0.0), s2(bins.size() + 1, 0.0);
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const double y = (bins[i] + 0.5) * w;
    s1[i + 1] = s1[i] + y;
    s2[i + 1] = s2[i] + y * y;
  }
  std::vector<std::vector<double>> out;
  out.reserve(wanted.size());
  for (auto pos : wanted) {
    const std::size_t end = pos + 1;
    const std::size_t begin = (window_ > 0 && end > window_) ? end - window_ : 0;
    const auto n = static_cast<double>(end - begin);
    const double mean = (s1[end] - s1[begin]) / n;
    double var = 0.0;
    if (n >= 2.0) var = std::max((s2[end] - s2[begin] - n * mean * mean) / (n - 1.0), 0.0);
    const double sd = std::max(std::sqrt(var), w);
    out.push_back(discretize(mean, sd, series.enc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// icl_forecast

std::vector<NextValueDistribution> icl_forecast(std::span<const double> series, const SeriesRescale& rescale,
                                                const NumericEncoding& enc, const ForecastBackend& backend,
                                                std::span<const std::size_t> positions) {
  require(series.size() >= 2, ErrorKind::InvalidArgument, "forecasting needs a series of at least 2 values");
  TokenizedSeries tok{tokenizer::encode_series(series, rescale, enc).bins, rescale, enc};
  const auto wanted = resolve_positions(tok.bins.size(), positions);
  auto rows = backend.next_bin_probs(tok, wanted);
  require(rows.size() == wanted.size(), ErrorKind::Backend,
          backend.name() + " returned " + std::to_string(rows.size()) + " rows for " + std::to_string(wanted.size()) +
              " positions");
  std::vector<NextValueDistribution> out;
  out.reserve(rows.size());
  for (auto& r : rows) out.emplace_back(std::move(r), rescale, enc);
  return out;
}

std::vector<NextValueDistribution> icl_forecast(std::span<const double> series, const NumericEncoding& enc,
                                                const ForecastBackend& backend,
                                                std::span<const std::size_t> positions) {
  return icl_forecast(series, tokenizer::fit_rescale(series, enc), enc, backend, positions);
}

std::vector<std::vector<NextValueDistribution>> icl_forecast_batch(const std::vector<std::vector<double>>& series,
                                                                   const NumericEncoding& enc,
                                                                   const ForecastBackend& backend,
                                                                   std::span<const std::size_t> positions,
                                                                   int jobs) {
  std::vector<std::vector<NextValueDistribution>> out(series.size());
  const std::size_t width = static_cast<std::size_t>(std::max(jobs, 1));
  for (std::size_t start = 0; start < series.size(); start += width) {
    const std::size_t stop = std::min(series.size(), start + width);
    if (stop - start == 1) {
      out[start] = icl_forecast(series[start], enc, backend, positions);
      continue;
    }
    std::vector<std::future<std::vector<NextValueDistribution>>> pending;
    for (std::size_t i = start; i < stop; ++i)
      pending.push_back(std::async(std::launch::async, [&, i] { return icl_forecast(series[i], enc, backend, positions); }));
    for (std::size_t i = start; i < stop; ++i) out[i] = pending[i - start].get();
  }
  return out;
}

}  // namespace dicl::forecast
