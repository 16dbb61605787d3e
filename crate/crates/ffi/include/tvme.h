/* Generated by cbindgen from the tvme-ffi crate. Do not edit. */

#ifndef TVME_H
#define TVME_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TvmeStatus {
  TVME_STATUS_OK = 0,
  TVME_STATUS_NULL_POINTER = 1,
  TVME_STATUS_INVALID_ARGUMENT = 2,
  // Malformed or inadequate input data.
  TVME_STATUS_DATA_ERROR = 3,
  // Singular or rank-deficient system.
  TVME_STATUS_NUMERICAL_ERROR = 4,
  TVME_STATUS_IO_ERROR = 5,
  TVME_STATUS_BUFFER_TOO_SMALL = 6,
  TVME_STATUS_PANIC = 7,
} TvmeStatus;

typedef enum TvmeAnchor {
  TVME_ANCHOR_OLS = 0,
  TVME_ANCHOR_DIFFUSE = 1,
} TvmeAnchor;

typedef enum TvmeRefinement {
  TVME_REFINEMENT_NONE = 0,
  TVME_REFINEMENT_FEASIBLE_GLS = 1,
  TVME_REFINEMENT_LIKELIHOOD_GRID = 2,
} TvmeRefinement;

typedef enum TvmeBandMethod {
  // Gaussian null panels with the sample mean and covariance.
  TVME_BAND_METHOD_MONTE_CARLO = 0,
  // Gaussian null panels with zero mean and identity covariance.
  TVME_BAND_METHOD_MONTE_CARLO_IDENTITY = 1,
  TVME_BAND_METHOD_BOOTSTRAP = 2,
} TvmeBandMethod;

// Aligned returns panel.
typedef struct TvmeReturns TvmeReturns;

// Fitted time-varying VAR, together with the panel it was fitted on.
typedef struct TvmeTvVar TvmeTvVar;

// Degree of market efficiency per period, optionally with a band.
typedef struct TvmeZeta TvmeZeta;

typedef struct TvmeTvVarOptions {
  double lambda;
  enum TvmeAnchor anchor;
  enum TvmeRefinement refinement;
} TvmeTvVarOptions;

typedef struct TvmeBandOptions {
  enum TvmeBandMethod method;
  size_t replications;
  double level;
  uint64_t seed;
} TvmeBandOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *tvme_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *tvme_version(void);

// Panel from a row-major `rows x cols` array of returns, with synthetic
// monthly dates.
//
// # Safety
// `data` must point to `rows * cols` doubles; `out` must be writable.
enum TvmeStatus tvme_returns_new(const double *data,
                                 size_t rows,
                                 size_t cols,
                                 struct TvmeReturns **out);

// Reads a monthly CSV panel. With `is_prices` non-zero the cells are price
// levels and are converted to log returns.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum TvmeStatus tvme_returns_load_csv(const char *path, int is_prices, struct TvmeReturns **out);

// # Safety
// `returns` must be a live handle or NULL.
enum TvmeStatus tvme_returns_dims(const struct TvmeReturns *returns, size_t *rows, size_t *cols);

// # Safety
// `returns` must come from this library and not be freed twice.
void tvme_returns_free(struct TvmeReturns *returns);

struct TvmeTvVarOptions tvme_tvvar_options_default(void);

// Fits the time-varying VAR. `p = 0` selects the order by BIC.
//
// # Safety
// `returns` must be a live handle; `options` may be NULL for defaults.
enum TvmeStatus tvme_tvvar_fit(const struct TvmeReturns *returns,
                               size_t p,
                               const struct TvmeTvVarOptions *options,
                               struct TvmeTvVar **out);

// Effective sample length, number of markets and VAR order.
//
// # Safety
// `fit` must be a live handle; outputs must be writable.
enum TvmeStatus tvme_tvvar_dims(const struct TvmeTvVar *fit, size_t *t_eff, size_t *k, size_t *p);

// Smoothing ratio actually used (after any refinement).
//
// # Safety
// `fit` must be a live handle; `lambda` must be writable.
enum TvmeStatus tvme_tvvar_lambda(const struct TvmeTvVar *fit, double *lambda);

// Coefficient path as `[t][lag][row][col]`, `t_eff * p * k * k` values.
//
// # Safety
// `out` must point to `len` writable doubles.
enum TvmeStatus tvme_tvvar_coefficients(const struct TvmeTvVar *fit, double *out, size_t len);

// Time-invariant intercept, `k` values.
//
// # Safety
// `out` must point to `len` writable doubles.
enum TvmeStatus tvme_tvvar_intercept(const struct TvmeTvVar *fit, double *out, size_t len);

// # Safety
// `fit` must come from this library and not be freed twice.
void tvme_tvvar_free(struct TvmeTvVar *fit);

// `zeta_t` for every period of the fit; undefined periods are NaN.
//
// # Safety
// `fit` must be a live handle; `out` must be writable.
enum TvmeStatus tvme_efficiency_degree(const struct TvmeTvVar *fit, struct TvmeZeta **out);

struct TvmeBandOptions tvme_band_options_default(void);

// Simulates the null band for `zeta` using the settings of `fit`.
//
// # Safety
// `zeta` and `fit` must be live handles; `options` may be NULL for defaults.
enum TvmeStatus tvme_zeta_attach_band(struct TvmeZeta *zeta,
                                      const struct TvmeTvVar *fit,
                                      const struct TvmeBandOptions *options);

// # Safety
// `zeta` must be a live handle; `len` must be writable.
enum TvmeStatus tvme_zeta_len(const struct TvmeZeta *zeta, size_t *len);

// Copies the series into caller buffers of `len` entries each. `band_lo`,
// `band_hi` and `inefficient` may be NULL; without a band they receive NaN
// and -1. Undefined `zeta_t` is NaN and its flag -1.
//
// # Safety
// Non-NULL buffers must hold `len` writable elements.
enum TvmeStatus tvme_zeta_values(const struct TvmeZeta *zeta,
                                 double *values,
                                 double *band_lo,
                                 double *band_hi,
                                 int *inefficient,
                                 size_t len);

// # Safety
// `zeta` must come from this library and not be freed twice.
void tvme_zeta_free(struct TvmeZeta *zeta);

// `(I - A_1 - .. - A_p)^{-1}` from `p` row-major `k x k` blocks stored
// consecutively; writes a row-major `k x k` result.
//
// # Safety
// `blocks` must hold `p * k * k` doubles and `out` `k * k`.
enum TvmeStatus tvme_long_run_multiplier(const double *blocks, size_t k, size_t p, double *out);

// `||Phi - I||_2` for a row-major `k x k` matrix.
//
// # Safety
// `phi` must hold `k * k` doubles; `out` must be writable.
enum TvmeStatus tvme_spectral_distance(const double *phi, size_t k, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TVME_H */
