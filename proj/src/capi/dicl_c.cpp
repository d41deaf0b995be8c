#include "dicl/dicl.h"

#include "dicl/app/commands.hpp"
#include "dicl/disentangle.hpp"
#include "dicl/forecaster.hpp"
#include "dicl/metrics.hpp"
#include "dicl/tokenizer.hpp"

#include <cstring>
#include <memory>
#include <new>
#include <random>
#include <sstream>
#include <string>

struct dicl_backend {
  std::shared_ptr<const dicl::forecast::ForecastBackend> impl;
};

struct dicl_distribution {
  dicl::forecast::NextValueDistribution impl;
};

struct dicl_pca {
  dicl::disentangle::PcaMap impl;
};

namespace {

thread_local std::string g_last_error;

dicl_status status_of(dicl::ErrorKind kind) {
  using dicl::ErrorKind;
  switch (kind) {
    case ErrorKind::InvalidArgument: return DICL_ERR_INVALID_ARGUMENT;
    case ErrorKind::Config: return DICL_ERR_CONFIG;
    case ErrorKind::Schema: return DICL_ERR_SCHEMA;
    case ErrorKind::Parse: return DICL_ERR_PARSE;
    case ErrorKind::Io: return DICL_ERR_IO;
    case ErrorKind::Backend: return DICL_ERR_BACKEND;
    case ErrorKind::ContextOverflow: return DICL_ERR_CONTEXT_OVERFLOW;
    case ErrorKind::Numerical: return DICL_ERR_NUMERICAL;
  }
  return DICL_ERR_INTERNAL;
}

template <class F>
dicl_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return DICL_OK;
  } catch (const dicl::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("config: ") + e.what();
    return DICL_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DICL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DICL_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return DICL_ERR_INTERNAL;
  }
}

void need(bool cond, const char* what) {
  if (!cond) dicl::fail(dicl::ErrorKind::InvalidArgument, what);
}

dicl::tokenizer::NumericEncoding to_encoding(dicl_encoding e) {
  dicl::tokenizer::NumericEncoding enc;
  enc.digits = e.digits;
  enc.pad_fraction = e.pad_fraction;
  enc.validate();
  return enc;
}

void write_string(const std::string& s, char* buf, std::size_t buf_len, std::size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (!buf) return;
  need(buf_len >= s.size() + 1, "output buffer too small");
  std::memcpy(buf, s.c_str(), s.size() + 1);
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Forwards complete lines to a C callback.
class CallbackBuf : public std::stringbuf {
 public:
  CallbackBuf(dicl_log_fn fn, void* user) : fn_(fn), user_(user) {}
  ~CallbackBuf() override { flush_lines(true); }
  int sync() override {
    flush_lines(false);
    return 0;
  }
  void flush_lines(bool all) {
    std::string s = str();
    std::size_t cut = all ? s.size() : s.rfind('\n');
    if (cut == std::string::npos || cut == 0) return;
    if (!all) ++cut;
    if (fn_) fn_(s.substr(0, cut).c_str(), user_);
    str(s.substr(cut));
  }

 private:
  dicl_log_fn fn_;
  void* user_;
};

dicl_status run(const char* verb, const nlohmann::json& cfg, const dicl_run_options* options) {
  dicl_run_options opts = options ? *options : dicl_run_options_default();
  dicl::app::RunOptions ro;
  if (opts.has_seed) ro.seed = opts.seed;
  if (opts.out_dir) ro.out_dir = opts.out_dir;
  if (opts.jobs > 0) ro.jobs = opts.jobs;
  if (opts.backend_url) ro.backend_url = opts.backend_url;
  CallbackBuf buf(opts.log, opts.log_user);
  std::ostream log(&buf);
  return guarded([&] {
    dicl::app::run_command(verb, cfg, ro, log);
    log.flush();
  });
}

}  // namespace

extern "C" {

const char* dicl_last_error(void) { return g_last_error.c_str(); }

const char* dicl_status_name(dicl_status status) {
  switch (status) {
    case DICL_OK: return "ok";
    case DICL_ERR_INVALID_ARGUMENT: return "invalid argument";
    case DICL_ERR_CONFIG: return "config error";
    case DICL_ERR_SCHEMA: return "schema error";
    case DICL_ERR_PARSE: return "parse error";
    case DICL_ERR_IO: return "i/o error";
    case DICL_ERR_BACKEND: return "backend error";
    case DICL_ERR_CONTEXT_OVERFLOW: return "context overflow";
    case DICL_ERR_NUMERICAL: return "numerical error";
    case DICL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

int dicl_exit_code(dicl_status status) {
  switch (status) {
    case DICL_OK: return 0;
    case DICL_ERR_INVALID_ARGUMENT:
    case DICL_ERR_CONFIG:
    case DICL_ERR_SCHEMA:
    case DICL_ERR_PARSE:
    case DICL_ERR_IO: return dicl::app::kExitConfig;
    case DICL_ERR_BACKEND:
    case DICL_ERR_CONTEXT_OVERFLOW: return dicl::app::kExitBackend;
    case DICL_ERR_NUMERICAL: return dicl::app::kExitNumerical;
    case DICL_ERR_INTERNAL: return 1;
  }
  return 1;
}

const char* dicl_version(void) { return "0.1.0"; }

dicl_encoding dicl_encoding_default(void) { return {3, 0.15}; }

dicl_status dicl_encode_series(const double* values, size_t n, dicl_encoding enc, char* buf, size_t buf_len,
                               size_t* needed) {
  return guarded([&] {
    need(values && n > 0, "values must be a non-empty array");
    const auto e = to_encoding(enc);
    const std::span<const double> s(values, n);
    write_string(dicl::tokenizer::encode_series(s, dicl::tokenizer::fit_rescale(s, e), e).text, buf, buf_len, needed);
  });
}

dicl_status dicl_encode_series_scaled(const double* values, size_t n, double source_min, double scale,
                                      dicl_encoding enc, char* buf, size_t buf_len, size_t* needed) {
  return guarded([&] {
    need(values && n > 0, "values must be a non-empty array");
    need(scale > 0.0, "scale must be positive");
    const auto e = to_encoding(enc);
    dicl::tokenizer::SeriesRescale r = dicl::tokenizer::SeriesRescale::identity();
    r.source_min = source_min;
    r.scale = scale;
    r.offset = 0.0;
    r.source_max = source_min + (e.target_hi - e.target_lo) / scale;
    write_string(dicl::tokenizer::encode_series({values, n}, r, e).text, buf, buf_len, needed);
  });
}

dicl_status dicl_backend_create(const char* kind, const char* url, dicl_backend** out) {
  return guarded([&] {
    need(kind && out, "kind and out must be non-null");
    *out = nullptr;
    dicl::forecast::ForecastBackendSpec spec;
    spec.kind = dicl::forecast::backend_kind_from_string(kind);
    if (url) spec.url = url;
    *out = new dicl_backend{dicl::forecast::make_backend(spec)};
  });
}

void dicl_backend_destroy(dicl_backend* backend) { delete backend; }

dicl_status dicl_forecast_next(const dicl_backend* backend, const double* series, size_t n, dicl_encoding enc,
                               dicl_distribution** out) {
  return guarded([&] {
    need(backend && series && out, "backend, series and out must be non-null");
    need(n >= 2, "series needs at least 2 values");
    *out = nullptr;
    const std::size_t last = n - 1;
    auto dists = dicl::forecast::icl_forecast({series, n}, to_encoding(enc), *backend->impl, {&last, 1});
    *out = new dicl_distribution{std::move(dists.front())};
  });
}

void dicl_distribution_destroy(dicl_distribution* dist) { delete dist; }

size_t dicl_distribution_size(const dicl_distribution* dist) { return dist ? dist->impl.size() : 0; }

dicl_status dicl_distribution_probs(const dicl_distribution* dist, double* out, size_t len) {
  return guarded([&] {
    need(dist && out, "dist and out must be non-null");
    need(len >= dist->impl.size(), "output buffer too small");
    std::copy(dist->impl.probs().begin(), dist->impl.probs().end(), out);
  });
}

dicl_status dicl_distribution_mean(const dicl_distribution* dist, double* out) {
  return guarded([&] {
    need(dist && out, "dist and out must be non-null");
    *out = dist->impl.mean();
  });
}

dicl_status dicl_distribution_mode(const dicl_distribution* dist, double* out) {
  return guarded([&] {
    need(dist && out, "dist and out must be non-null");
    *out = dist->impl.mode();
  });
}

dicl_status dicl_distribution_quantile(const dicl_distribution* dist, double p, double* out) {
  return guarded([&] {
    need(dist && out, "dist and out must be non-null");
    need(p >= 0.0 && p <= 1.0, "p must lie in [0, 1]");
    *out = dist->impl.quantile(p);
  });
}

dicl_status dicl_distribution_cdf(const dicl_distribution* dist, double value, double* out) {
  return guarded([&] {
    need(dist && out, "dist and out must be non-null");
    *out = dist->impl.cdf(value);
  });
}

dicl_status dicl_distribution_sample(const dicl_distribution* dist, uint64_t seed, double* out) {
  return guarded([&] {
    need(dist && out, "dist and out must be non-null");
    std::mt19937_64 rng(seed);
    *out = dist->impl.sample(rng);
  });
}

dicl_status dicl_pca_fit(const double* data, size_t rows, size_t cols, size_t n_components, int standardize,
                         dicl_pca** out) {
  return guarded([&] {
    need(data && out, "data and out must be non-null");
    need(rows >= 2 && cols >= 1, "need at least 2 rows and 1 column");
    *out = nullptr;
    const Eigen::MatrixXd x =
        Eigen::Map<const RowMajor>(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const auto c = n_components == 0 ? dicl::disentangle::default_component_count(x.cols())
                                     : static_cast<Eigen::Index>(n_components);
    dicl::disentangle::PcaOptions o;
    o.standardize = standardize != 0;
    *out = new dicl_pca{dicl::disentangle::fit_pca(x, c, o)};
  });
}

void dicl_pca_destroy(dicl_pca* pca) { delete pca; }

size_t dicl_pca_input_dim(const dicl_pca* pca) { return pca ? static_cast<size_t>(pca->impl.input_dim()) : 0; }

size_t dicl_pca_n_components(const dicl_pca* pca) {
  return pca ? static_cast<size_t>(pca->impl.n_components()) : 0;
}

dicl_status dicl_pca_explained_variance(const dicl_pca* pca, double* out, size_t len) {
  return guarded([&] {
    need(pca && out, "pca and out must be non-null");
    const auto& ev = pca->impl.explained_variance;
    need(len >= static_cast<size_t>(ev.size()), "output buffer too small");
    std::copy(ev.data(), ev.data() + ev.size(), out);
  });
}

dicl_status dicl_pca_transform(const dicl_pca* pca, const double* in, size_t rows, double* out) {
  return guarded([&] {
    need(pca && in && out, "pca, in and out must be non-null");
    const auto r = static_cast<Eigen::Index>(rows);
    const Eigen::MatrixXd x = Eigen::Map<const RowMajor>(in, r, pca->impl.input_dim());
    Eigen::Map<RowMajor>(out, r, pca->impl.n_components()) = pca->impl.transform(x);
  });
}

dicl_status dicl_pca_inverse(const dicl_pca* pca, const double* in, size_t rows, double* out) {
  return guarded([&] {
    need(pca && in && out, "pca, in and out must be non-null");
    const auto r = static_cast<Eigen::Index>(rows);
    const Eigen::MatrixXd z = Eigen::Map<const RowMajor>(in, r, pca->impl.n_components());
    Eigen::Map<RowMajor>(out, r, pca->impl.input_dim()) = pca->impl.inverse(z);
  });
}

dicl_status dicl_ks_statistic(const double* quantiles, size_t n, double* out) {
  return guarded([&] {
    need(quantiles && out && n > 0, "quantiles must be a non-empty array");
    *out = dicl::metrics::ks_statistic({quantiles, n});
  });
}

dicl_status dicl_truth_quantile(const dicl_distribution* dist, double truth, double* out) {
  return guarded([&] {
    need(dist && out, "dist and out must be non-null");
    *out = dicl::metrics::truth_quantile(dist->impl, truth);
  });
}

dicl_run_options dicl_run_options_default(void) { return {0, 0, nullptr, 0, nullptr, nullptr, nullptr}; }

dicl_status dicl_command_run(const char* verb, const char* config_path, const dicl_run_options* options) {
  nlohmann::json cfg;
  const dicl_status st = guarded([&] {
    need(verb && config_path, "verb and config path must be non-null");
    cfg = dicl::app::load_config_file(config_path);
  });
  if (st != DICL_OK) return st;
  return run(verb, cfg, options);
}

dicl_status dicl_command_run_json(const char* verb, const char* config_json, const dicl_run_options* options) {
  nlohmann::json cfg;
  const dicl_status st = guarded([&] {
    need(verb && config_json, "verb and config must be non-null");
    try {
      cfg = nlohmann::json::parse(config_json);
    } catch (const nlohmann::json::parse_error& e) {
      dicl::fail(dicl::ErrorKind::Config, std::string("invalid JSON config: ") + e.what());
    }
  });
  if (st != DICL_OK) return st;
  return run(verb, cfg, options);
}

}  // extern "C"
