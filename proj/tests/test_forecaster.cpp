#include "dicl/error.hpp"
#include "dicl/forecaster.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace dicl;
using namespace dicl::forecast;
using tokenizer::NumericEncoding;
using tokenizer::SeriesRescale;

namespace {

double total(const NextValueDistribution& d) { return std::accumulate(d.probs().begin(), d.probs().end(), 0.0); }

NextValueDistribution random_dist(std::mt19937_64& rng) {
  std::exponential_distribution<double> ex(1.0);
  std::bernoulli_distribution keep(0.05);
  std::vector<double> p(1000, 0.0);
  for (auto& v : p)
    if (keep(rng)) v = ex(rng);
  p[rng() % 1000] += 1.0;
  const double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& v : p) v /= s;
  return {p, SeriesRescale::identity(), NumericEncoding{}};
}

}  // namespace

TEST_CASE("markov_bin continues a periodic series") {
  const std::vector<double> s{1, 2, 3, 1, 2, 3, 1, 2};
  const NumericEncoding enc;
  const auto dists = icl_forecast(s, enc, MarkovBinBackend{});
  REQUIRE(dists.size() == s.size());
  const auto& last = dists.back();
  CHECK(last.probs()[static_cast<std::size_t>(last.bin_of(3.0))] >= 0.99);
  CHECK(last.mode() == doctest::Approx(3.0).epsilon(1e-2));
}

TEST_CASE("markov_bin reproduces a deterministic cycle under mode sampling") {
  std::vector<double> s;
  const double cycle[] = {0.3, -1.2, 2.5, 0.9, -0.4};
  for (int i = 0; i < 40; ++i) s.push_back(cycle[i % 5]);
  const NumericEncoding enc;
  const auto r = tokenizer::fit_rescale(s, enc);
  const auto dists = icl_forecast(s, r, enc, MarkovBinBackend{});
  for (std::size_t i = 5; i + 1 < s.size(); ++i)
    CHECK(dists[i].mode_bin() == tokenizer::encode_value(s[i + 1], r, enc));
}

TEST_CASE("gaussian_context matches in-context moments") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n01;
  std::vector<double> s(400);
  for (auto& v : s) v = n01(rng);
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  const auto dists = icl_forecast(s, NumericEncoding{}, GaussianContextBackend{});
  CHECK(std::abs(dists.back().mean() - mean) <= 3.0 / std::sqrt(static_cast<double>(s.size())));
}

TEST_CASE("constant series: every local backend puts the mode on the constant") {
  const std::vector<double> s(30, 4.2);
  const NumericEncoding enc;
  const auto r = tokenizer::fit_rescale(s, enc);
  const int bin = tokenizer::encode_value(4.2, r, enc);
  for (const ForecastBackend* b : std::initializer_list<const ForecastBackend*>{
           new MarkovBinBackend(), new GaussianContextBackend()}) {
    const auto d = icl_forecast(s, r, enc, *b);
    CHECK(d.back().mode_bin() == bin);
    delete b;
  }
}

TEST_CASE("distributions are normalised and causal for every local backend") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  std::vector<double> s(60);
  for (auto& v : s) v = n01(rng);
  const NumericEncoding enc;
  const auto r = tokenizer::fit_rescale(s, enc);
  MarkovBinBackend markov(0.01);
  GaussianContextBackend gauss(20);
  for (const ForecastBackend* b : {static_cast<const ForecastBackend*>(&markov), static_cast<const ForecastBackend*>(&gauss)}) {
    const auto base = icl_forecast(s, r, enc, *b);
    for (const auto& d : base) CHECK(std::abs(total(d) - 1.0) < 1e-9);
    auto perturbed = s;
    perturbed[40] += 0.7;
    const auto after = icl_forecast(perturbed, r, enc, *b);
    for (std::size_t i = 0; i < 40; ++i) CHECK(after[i].probs() == base[i].probs());
  }
}

TEST_CASE("batched forecasts equal separate calls") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  std::vector<std::vector<double>> series(5, std::vector<double>(50));
  for (auto& s : series)
    for (auto& v : s) v = n01(rng);
  const NumericEncoding enc;
  MarkovBinBackend markov;
  const std::size_t pos[] = {10, 49};
  const auto batch = icl_forecast_batch(series, enc, markov, pos, 3);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto single = icl_forecast(series[i], enc, markov, pos);
    REQUIRE(batch[i].size() == single.size());
    for (std::size_t j = 0; j < single.size(); ++j) CHECK(batch[i][j].probs() == single[j].probs());
  }
}

TEST_CASE("logits to distribution") {
  const NumericEncoding enc;
  const auto id = SeriesRescale::identity();
  std::vector<double> flat(1000, 0.3);
  const auto u = logits_to_distribution(flat, 1.0, id, enc);
  for (double p : u.probs()) CHECK(p == doctest::Approx(1e-3).epsilon(1e-12));

  std::vector<double> peak(1000, 0.0);
  peak[123] = 20.0;
  CHECK(logits_to_distribution(peak, 1.0, id, enc).probs()[123] > 0.999);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  std::vector<double> any(1000);
  for (auto& v : any) v = 5.0 * n01(rng);
  const auto hot = logits_to_distribution(any, 1e6, id, enc);
  const auto [lo, hi] = std::minmax_element(hot.probs().begin(), hot.probs().end());
  CHECK(*hi / *lo - 1.0 < 1e-3);

  std::vector<double> dead(1000, -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(logits_to_distribution(dead, 1.0, id, enc), Error);
  std::vector<double> bad(1000, 0.0);
  bad[3] = std::nan("");
  CHECK_THROWS_AS(logits_to_distribution(bad, 1.0, id, enc), Error);
  CHECK_THROWS_AS(logits_to_distribution(flat, 0.0, id, enc), Error);
}

TEST_CASE("point mass statistics") {
  const NumericEncoding enc;
  const auto d = NextValueDistribution::point_mass(417, SeriesRescale::identity(), enc);
  const double c = tokenizer::bin_center(417, SeriesRescale::identity(), enc);
  CHECK(d.mean() == doctest::Approx(c));
  CHECK(d.mode() == doctest::Approx(c));
  CHECK(d.variance() == doctest::Approx(0.0));
  CHECK(d.quantile(0.0) == doctest::Approx(c));
  CHECK(d.quantile(1.0) == doctest::Approx(c));
}

TEST_CASE("uniform median is the middle bin") {
  std::vector<double> p(1000, 1e-3);
  const NextValueDistribution d(p, SeriesRescale::identity(), NumericEncoding{});
  CHECK(std::abs(d.quantile(0.5) - 5.0) <= 0.01);
}

TEST_CASE("generalised inverse: cdf(quantile(p)) >= p") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const auto d = random_dist(rng);
    for (int j = 0; j < 20; ++j) {
      const double p = u(rng);
      CHECK(d.cdf(d.quantile(p)) >= p - 1e-12);
      // And no lower bin with mass already reaches p.
      const int q = d.quantile_bin(p);
      if (q > 0) CHECK(d.cdf_bin(q - 1) < p + 1e-12);
    }
  }
}

TEST_CASE("sampling is reproducible and follows the probabilities") {
  std::vector<double> p(1000, 0.0);
  p[10] = 0.25;
  p[900] = 0.75;
  const NextValueDistribution d(p, SeriesRescale::identity(), NumericEncoding{});
  std::mt19937_64 a(3), b(3);
  int high = 0;
  for (int i = 0; i < 20000; ++i) {
    const int x = d.sample_bin(a);
    CHECK(x == d.sample_bin(b));
    high += x == 900;
  }
  CHECK(std::abs(high / 20000.0 - 0.75) < 4.0 * std::sqrt(0.75 * 0.25 / 20000.0));
}

TEST_CASE("invalid probabilities are rejected") {
  std::vector<double> p(1000, 0.0);
  CHECK_THROWS_AS(NextValueDistribution(p, SeriesRescale::identity(), NumericEncoding{}), Error);
  p[0] = -0.5;
  p[1] = 1.5;
  CHECK_THROWS_AS(NextValueDistribution(p, SeriesRescale::identity(), NumericEncoding{}), Error);
  CHECK_THROWS_AS(NextValueDistribution(std::vector<double>(10, 0.1), SeriesRescale::identity(), NumericEncoding{}),
                  Error);
}

TEST_CASE("backend factory and names") {
  ForecastBackendSpec spec;
  spec.kind = backend_kind_from_string("gaussian_context");
  CHECK(make_backend(spec)->name() == "gaussian_context");
  CHECK(to_string(BackendKind::MarkovBin) == "markov_bin");
  CHECK_THROWS_AS(backend_kind_from_string("gpt"), Error);
  spec.kind = BackendKind::LlmHttp;
  spec.url.clear();
  CHECK_THROWS_AS(make_backend(spec), Error);
}

TEST_CASE("too-short series and bad positions") {
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(icl_forecast(one, NumericEncoding{}, MarkovBinBackend{}), Error);
  const std::vector<double> s{1, 2, 3};
  const std::size_t bad[] = {3};
  CHECK_THROWS_AS(icl_forecast(s, NumericEncoding{}, MarkovBinBackend{}, bad), Error);
}
