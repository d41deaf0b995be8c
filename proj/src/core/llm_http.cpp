#include "dicl/error.hpp"
#include "dicl/forecaster.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <semaphore>
#include <thread>

namespace dicl::forecast {

using nlohmann::json;

namespace {

constexpr const char* kEndpoint = "/v1/icl_forecast";

// Splits "http://host:port/prefix" into the client base and a path prefix.
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme = url.find("://");
  require(scheme != std::string::npos, ErrorKind::Config, "backend url '" + url + "' has no scheme");
  const auto path = url.find('/', scheme + 3);
  if (path == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path), prefix};
}

}  // namespace

struct LlmHttpBackend::Impl {
  ForecastBackendSpec spec;
  std::string base;
  std::string path;
  std::counting_semaphore<1024> slots;
  std::atomic<std::uint64_t> sent{0};

  explicit Impl(ForecastBackendSpec s)
      : spec(std::move(s)), slots(std::clamp<std::ptrdiff_t>(spec.max_concurrency, 1, 1024)) {
    auto [b, prefix] = split_url(spec.url);
    base = b;
    path = prefix + kEndpoint;
  }
};

LlmHttpBackend::LlmHttpBackend(ForecastBackendSpec spec) {
  require(!spec.url.empty(), ErrorKind::Config, "llm_http backend needs a url");
  require(spec.max_attempts >= 1, ErrorKind::Config, "max_attempts must be at least 1");
  impl_ = std::make_unique<Impl>(std::move(spec));
}

LlmHttpBackend::~LlmHttpBackend() = default;

std::uint64_t LlmHttpBackend::requests_sent() const { return impl_->sent.load(); }

std::vector<std::vector<double>> LlmHttpBackend::next_bin_probs(const TokenizedSeries& series,
                                                                std::span<const std::size_t> positions) const {
  json request;
  request["series_bins"] = series.bins;
  request["k"] = series.enc.digits;
  if (positions.empty() || positions.size() == series.bins.size()) {
    bool all = positions.empty();
    if (!all) {
      all = true;
      for (std::size_t i = 0; i < positions.size(); ++i) all = all && positions[i] == i;
    }
    if (all) request["return_positions"] = "all";
  }
  if (!request.contains("return_positions"))
    request["return_positions"] = std::vector<std::size_t>(positions.begin(), positions.end());
  const std::size_t expected = positions.empty() ? series.bins.size() : positions.size();
  const std::string body = request.dump();

  auto& impl = *impl_;
  impl.slots.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{impl.slots};

  httplib::Client client(impl.base);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(impl.spec.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(impl.spec.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());

  int last_status = 0;
  std::string last_reason;
  for (int attempt = 0; attempt < impl.spec.max_attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(impl.spec.backoff * (1 << (attempt - 1)));
    ++impl.sent;
    auto res = client.Post(impl.path, body, "application/json");
    if (!res) {
      last_status = 0;
      last_reason = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    last_status = res->status;
    if (res->status == 413)
      throw BackendError("llm_http: context overflow (HTTP 413) for series of length " +
                             std::to_string(series.bins.size()),
                         413, false);
    if (res->status >= 500) {
      last_reason = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw BackendError("llm_http: HTTP " + std::to_string(res->status) + ": " + res->body, res->status, false);

    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::exception& e) {
      throw BackendError(std::string("llm_http: malformed response: ") + e.what(), res->status, false);
    }
    if (!reply.contains("logits") || !reply["logits"].is_array())
      throw BackendError("llm_http: response has no 'logits' array", res->status, false);
    const auto& rows = reply["logits"];
    if (rows.size() != expected)
      throw BackendError("llm_http: expected " + std::to_string(expected) + " logit rows, got " +
                             std::to_string(rows.size()),
                         res->status, false);
    std::vector<std::vector<double>> out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
      std::vector<double> logits;
      try {
        logits = row.get<std::vector<double>>();
      } catch (const json::exception&) {
        throw BackendError("llm_http: logit row is not numeric", res->status, false);
      }
      if (logits.size() != series.enc.bin_count())
        throw BackendError("llm_http: logit row has " + std::to_string(logits.size()) + " entries, expected " +
                               std::to_string(series.enc.bin_count()),
                           res->status, false);
      out.push_back(softmax(logits, impl.spec.temperature));
    }
    return out;
  }
  throw BackendError("llm_http: giving up after " + std::to_string(impl.spec.max_attempts) + " attempts (" +
                         last_reason + ")",
                     last_status, true);
}

}  // namespace dicl::forecast
