#pragma once

#include "dicl/tokenizer.hpp"

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dicl::forecast {

using tokenizer::NumericEncoding;
using tokenizer::SeriesRescale;

/// Categorical distribution over the numeric bins of one next value.
class NextValueDistribution {
 public:
  NextValueDistribution(std::vector<double> probs, SeriesRescale rescale, NumericEncoding enc);

  static NextValueDistribution point_mass(int bin, SeriesRescale rescale, NumericEncoding enc);

  const std::vector<double>& probs() const { return probs_; }
  const SeriesRescale& rescale() const { return rescale_; }
  const NumericEncoding& encoding() const { return enc_; }
  std::size_t size() const { return probs_.size(); }

  double bin_value(int bin) const;  // source-unit bin centre
  int bin_of(double value) const;   // clamped

  double mean() const;
  double variance() const;
  int mode_bin() const;  // lowest bin among ties
  double mode() const { return bin_value(mode_bin()); }

  /// Generalised inverse inf{y : p <= F(y)} over bin centres; p = 0 returns the
  /// lowest bin carrying mass.
  int quantile_bin(double p) const;
  double quantile(double p) const { return bin_value(quantile_bin(p)); }

  /// Right-continuous CDF with bin centres as atoms.
  double cdf(double value) const;
  /// CDF at the bin holding `value`, atom included. Used for truth quantiles.
  double cdf_bin(int bin) const;

  int sample_bin(std::mt19937_64& rng) const;
  double sample(std::mt19937_64& rng) const { return bin_value(sample_bin(rng)); }

 private:
  std::vector<double> probs_;
  std::vector<double> cumulative_;
  SeriesRescale rescale_;
  NumericEncoding enc_;
};

/// Softmax of logits / temperature over the numeric bins.
NextValueDistribution logits_to_distribution(std::span<const double> logits, double temperature,
                                             const SeriesRescale& rescale, const NumericEncoding& enc);

/// Softmax only, for backends that return raw logits.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

struct TokenizedSeries {
  std::vector<int> bins;
  SeriesRescale rescale;
  NumericEncoding enc;
};

/// An in-context learner. Row i of the result is the distribution of value
/// i + 1 conditioned on bins 0..i; implementations must not read past i.
class ForecastBackend {
 public:
  virtual ~ForecastBackend() = default;
  virtual std::vector<std::vector<double>> next_bin_probs(const TokenizedSeries& series,
                                                          std::span<const std::size_t> positions) const = 0;
  virtual std::string name() const = 0;
};

enum class BackendKind { LlmHttp, GaussianContext, MarkovBin };

struct ForecastBackendSpec {
  BackendKind kind = BackendKind::MarkovBin;
  // llm_http
  std::string url;
  std::chrono::milliseconds timeout{30000};
  int max_attempts = 3;
  std::chrono::milliseconds backoff{200};
  int max_concurrency = 4;
  double temperature = 1.0;
  // gaussian_context: 0 uses the whole prefix
  std::size_t window = 0;
  // markov_bin
  double smoothing = 0.0;
  std::size_t min_count = 1;
};

std::string to_string(BackendKind kind);
BackendKind backend_kind_from_string(const std::string& name);

std::shared_ptr<const ForecastBackend> make_backend(const ForecastBackendSpec& spec);

/// Empirical next-bin frequencies over the context. A source bin that has not
/// been visited borrows the rows of the nearest visited bins; with no history
/// at all the prediction is persistence.
class MarkovBinBackend final : public ForecastBackend {
 public:
  explicit MarkovBinBackend(double smoothing = 0.0, std::size_t min_count = 1);
  std::vector<std::vector<double>> next_bin_probs(const TokenizedSeries& series,
                                                  std::span<const std::size_t> positions) const override;
  std::string name() const override { return "markov_bin"; }

 private:
  double smoothing_;
  std::size_t min_count_;
};

/// Gaussian fitted to the in-context mean and variance, integrated over bins
/// with the tails folded into the edge bins.
class GaussianContextBackend final : public ForecastBackend {
 public:
  explicit GaussianContextBackend(std::size_t window = 0);
  std::vector<std::vector<double>> next_bin_probs(const TokenizedSeries& series,
                                                  std::span<const std::size_t> positions) const override;
  std::string name() const override { return "gaussian_context"; }

  static std::vector<double> discretize(double mean, double stddev, const NumericEncoding& enc);

 private:
  std::size_t window_;
};

class LlmHttpBackend final : public ForecastBackend {
 public:
  explicit LlmHttpBackend(ForecastBackendSpec spec);
  ~LlmHttpBackend() override;
  std::vector<std::vector<double>> next_bin_probs(const TokenizedSeries& series,
                                                  std::span<const std::size_t> positions) const override;
  std::string name() const override { return "llm_http"; }

  /// Requests issued so far, including retries.
  std::uint64_t requests_sent() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Tokenizes with a freshly fitted rescale and returns one distribution per
/// requested position (all positions when `positions` is empty).
std::vector<NextValueDistribution> icl_forecast(std::span<const double> series, const NumericEncoding& enc,
                                                const ForecastBackend& backend,
                                                std::span<const std::size_t> positions = {});

/// Same, with a caller-provided rescale.
std::vector<NextValueDistribution> icl_forecast(std::span<const double> series, const SeriesRescale& rescale,
                                                const NumericEncoding& enc, const ForecastBackend& backend,
                                                std::span<const std::size_t> positions = {});

/// Forecasts several independent series, up to `jobs` at a time. Element i is
/// identical to icl_forecast(series[i], ...).
std::vector<std::vector<NextValueDistribution>> icl_forecast_batch(const std::vector<std::vector<double>>& series,
                                                                   const NumericEncoding& enc,
                                                                   const ForecastBackend& backend,
                                                                   std::span<const std::size_t> positions = {},
                                                                   int jobs = 1);

}  // namespace dicl::forecast
