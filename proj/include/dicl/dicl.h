#ifndef DICL_DICL_H
#define DICL_DICL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(DICL_BUILDING_LIBRARY)
#    define DICL_API __declspec(dllexport)
#  else
#    define DICL_API __declspec(dllimport)
#  endif
#else
#  define DICL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dicl_status {
  DICL_OK = 0,
  DICL_ERR_INVALID_ARGUMENT = 1,
  DICL_ERR_CONFIG = 2,
  DICL_ERR_SCHEMA = 3,
  DICL_ERR_PARSE = 4,
  DICL_ERR_IO = 5,
  DICL_ERR_BACKEND = 6,
  DICL_ERR_CONTEXT_OVERFLOW = 7,
  DICL_ERR_NUMERICAL = 8,
  DICL_ERR_INTERNAL = 9
} dicl_status;

/* Message of the last failed call on this thread; empty after a success. */
DICL_API const char* dicl_last_error(void);
DICL_API const char* dicl_status_name(dicl_status status);
/* Process exit code for a status: 0, 2 (config/data), 3 (backend), 4 (numerical) or 1. */
DICL_API int dicl_exit_code(dicl_status status);
DICL_API const char* dicl_version(void);

/* ---- tokenizer ---- */

typedef struct dicl_encoding {
  int digits;          /* default 3 */
  double pad_fraction; /* default 0.15 */
} dicl_encoding;

DICL_API dicl_encoding dicl_encoding_default(void);

/* Rescales `values` onto the digit range and writes the comma-separated
   token string. `needed` receives the string length plus the terminator;
   call with buf = NULL to query it. */
DICL_API dicl_status dicl_encode_series(const double* values, size_t n, dicl_encoding enc, char* buf,
                                        size_t buf_len, size_t* needed);

/* Encodes with an explicit affine map value -> (value - source_min) * scale. */
DICL_API dicl_status dicl_encode_series_scaled(const double* values, size_t n, double source_min, double scale,
                                               dicl_encoding enc, char* buf, size_t buf_len, size_t* needed);

/* ---- backends and next-value distributions ---- */

typedef struct dicl_backend dicl_backend;
typedef struct dicl_distribution dicl_distribution;

/* kind: "markov_bin", "gaussian_context" or "llm_http"; url is used by llm_http only. */
DICL_API dicl_status dicl_backend_create(const char* kind, const char* url, dicl_backend** out);
DICL_API void dicl_backend_destroy(dicl_backend* backend);

/* Distribution of the value following series[n - 1]. */
DICL_API dicl_status dicl_forecast_next(const dicl_backend* backend, const double* series, size_t n,
                                        dicl_encoding enc, dicl_distribution** out);
DICL_API void dicl_distribution_destroy(dicl_distribution* dist);

DICL_API size_t dicl_distribution_size(const dicl_distribution* dist);
DICL_API dicl_status dicl_distribution_probs(const dicl_distribution* dist, double* out, size_t len);
DICL_API dicl_status dicl_distribution_mean(const dicl_distribution* dist, double* out);
DICL_API dicl_status dicl_distribution_mode(const dicl_distribution* dist, double* out);
DICL_API dicl_status dicl_distribution_quantile(const dicl_distribution* dist, double p, double* out);
DICL_API dicl_status dicl_distribution_cdf(const dicl_distribution* dist, double value, double* out);
DICL_API dicl_status dicl_distribution_sample(const dicl_distribution* dist, uint64_t seed, double* out);

/* ---- PCA ---- */

typedef struct dicl_pca dicl_pca;

/* data is row-major [rows x cols]; n_components = 0 picks ceil(cols / 2). */
DICL_API dicl_status dicl_pca_fit(const double* data, size_t rows, size_t cols, size_t n_components,
                                  int standardize, dicl_pca** out);
DICL_API void dicl_pca_destroy(dicl_pca* pca);
DICL_API size_t dicl_pca_input_dim(const dicl_pca* pca);
DICL_API size_t dicl_pca_n_components(const dicl_pca* pca);
DICL_API dicl_status dicl_pca_explained_variance(const dicl_pca* pca, double* out, size_t len);
/* in [rows x input_dim] -> out [rows x n_components], both row-major. */
DICL_API dicl_status dicl_pca_transform(const dicl_pca* pca, const double* in, size_t rows, double* out);
/* in [rows x n_components] -> out [rows x input_dim]. */
DICL_API dicl_status dicl_pca_inverse(const dicl_pca* pca, const double* in, size_t rows, double* out);

/* ---- metrics ---- */

DICL_API dicl_status dicl_ks_statistic(const double* quantiles, size_t n, double* out);
/* Empirical CDF of the truth quantile under `dist`, atom included. */
DICL_API dicl_status dicl_truth_quantile(const dicl_distribution* dist, double truth, double* out);

/* ---- commands ---- */

typedef void (*dicl_log_fn)(const char* text, void* user);

typedef struct dicl_run_options {
  int has_seed;
  uint64_t seed;
  const char* out_dir;     /* NULL keeps the config value */
  int jobs;                /* 0 keeps the config value */
  const char* backend_url; /* NULL keeps the config value */
  dicl_log_fn log;         /* NULL discards progress text */
  void* log_user;
} dicl_run_options;

DICL_API dicl_run_options dicl_run_options_default(void);
/* verb: forecast, metrics, boundcheck, train, policyeval or sensitivity.
   config_path may be TOML or .json. */
DICL_API dicl_status dicl_command_run(const char* verb, const char* config_path, const dicl_run_options* options);
/* Same, with the config given as a JSON object string. */
DICL_API dicl_status dicl_command_run_json(const char* verb, const char* config_json,
                                           const dicl_run_options* options);

#ifdef __cplusplus
}
#endif

#endif
