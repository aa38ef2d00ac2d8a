#ifndef QSMOOTH_H
#define QSMOOTH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QsStatus {
  QS_OK = 0,
  QS_ERR_NULL_POINTER = 1,
  QS_ERR_CONFIG = 2,
  QS_ERR_NUMERICAL = 3,
  QS_ERR_IO = 4,
  QS_ERR_OUT_OF_RANGE = 5,
  QS_ERR_PANIC = 6,
} QsStatus;

// Scenario configuration.
typedef struct QsConfig QsConfig;

// Datasets produced by a scenario run.
typedef struct QsResult QsResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *qs_last_error_message(void);

void qs_clear_error(void);

// Library version as a static NUL-terminated string.
const char *qs_version(void);

// Default configuration for the named preset.
//
// # Safety
// `preset` must be a NUL-terminated string and `out` a valid pointer.
enum QsStatus qs_config_new(const char *preset, struct QsConfig **out);

// Configuration from `key = value` text.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a valid pointer.
enum QsStatus qs_config_parse(const char *text, struct QsConfig **out);

// Sets one key.
//
// # Safety
// `cfg` must come from this library; `key` and `value` must be
// NUL-terminated strings.
enum QsStatus qs_config_set(struct QsConfig *cfg, const char *key, const char *value);

// # Safety
// `cfg` must be NULL or come from this library and not be used afterwards.
void qs_config_free(struct QsConfig *cfg);

// Runs the configured preset.
//
// # Safety
// `cfg` must come from this library and `out` be a valid pointer.
enum QsStatus qs_run(const struct QsConfig *cfg, struct QsResult **out);

// Number of datasets, or 0 for NULL.
//
// # Safety
// `res` must be NULL or come from this library.
size_t qs_result_dataset_count(const struct QsResult *res);

// Name of dataset `index`, or NULL if out of range. Owned by `res`.
//
// # Safety
// `res` must be NULL or come from this library.
const char *qs_result_dataset_name(const struct QsResult *res, size_t index);

// Row and column counts of dataset `index`.
//
// # Safety
// `res` must come from this library; `rows` and `cols` must be valid.
enum QsStatus qs_result_dataset_shape(const struct QsResult *res,
                                      size_t index,
                                      size_t *rows,
                                      size_t *cols);

// Header of column `column` in dataset `index`, or NULL. Owned by `res`.
//
// # Safety
// `res` must be NULL or come from this library.
const char *qs_result_column_name(const struct QsResult *res, size_t index, size_t column);

// Copies dataset `index` row-major into `buf`, which holds `len` doubles
// and must fit `rows * cols`.
//
// # Safety
// `res` must come from this library and `buf` point to `len` doubles.
enum QsStatus qs_result_copy_values(const struct QsResult *res,
                                    size_t index,
                                    double *buf,
                                    size_t len);

// Writes all CSV (and auxiliary) files of `res` into directory `dir`.
//
// # Safety
// `res` must come from this library and `dir` be a NUL-terminated path.
enum QsStatus qs_result_write(const struct QsResult *res, const char *dir);

// # Safety
// `res` must be NULL or come from this library and not be used afterwards.
void qs_result_free(struct QsResult *res);

// Normalized Jordan product of the state with Bloch vector `rho_bloch` and
// the effect `effect_scale·½(1 + b·σ)`. Writes its Bloch vector and
// smallest eigenvalue.
//
// # Safety
// The array arguments must hold 3 doubles; `min_eigenvalue` must be valid.
enum QsStatus qs_swv_state(const double *rho_bloch,
                           double effect_scale,
                           const double *effect_bloch,
                           double *out_bloch,
                           double *min_eigenvalue);

// Adaptive-scheme ensemble for rates `gamma`, `epsilon` with `δ → 0`:
// angles, occupations and `(μ₋, μ₊)` per state.
//
// # Safety
// `angles` and `occupations` must hold 3 doubles and `wlo` 6.
enum QsStatus qs_pre_solve(double gamma,
                           double epsilon,
                           double *angles,
                           double *occupations,
                           double *wlo);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QSMOOTH_H */
