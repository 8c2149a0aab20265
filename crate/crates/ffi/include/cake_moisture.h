#ifndef CAKE_MOISTURE_H
#define CAKE_MOISTURE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CmStatus {
  CM_STATUS_OK = 0,
  CM_STATUS_NULL_POINTER = 1,
  CM_STATUS_INVALID_ARGUMENT = 2,
  CM_STATUS_IO = 3,
  CM_STATUS_PARSE = 4,
  CM_STATUS_SCHEMA_MISMATCH = 5,
  CM_STATUS_ARITY = 6,
  CM_STATUS_DEGENERATE = 7,
  CM_STATUS_VERSION = 8,
  CM_STATUS_PANIC = 99,
} CmStatus;

typedef enum CmModelKind {
  CM_MODEL_KIND_RFR = 0,
  CM_MODEL_KIND_SVR = 1,
} CmModelKind;

/**
 * Trained model with its normalizer.
 */
typedef struct CmModel CmModel;

/**
 * Forest hyperparameters. `max_depth == 0` means unlimited.
 */
typedef struct CmForestParams {
  size_t n_trees;
  size_t m_try;
  size_t max_depth;
  size_t min_samples_leaf;
  size_t min_samples_split;
  bool bootstrap;
  uint64_t seed;
} CmForestParams;

/**
 * SVR hyperparameters. `gamma <= 0` selects the width scaled to the data;
 * `linear` ignores `gamma`.
 */
typedef struct CmSvrParams {
  double c;
  double epsilon;
  double gamma;
  bool linear;
  double kkt_tolerance;
  size_t max_passes;
} CmSvrParams;

/**
 * Undefined R² values are NaN.
 */
typedef struct CmMetrics {
  double r2_uncentered;
  double r2_centered;
  double mse;
  double mae;
} CmMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a success.
 *
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *cm_last_error_message(void);

/**
 * Loads a model file written by `cm_model_save` or the `train` command.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CmStatus cm_model_load(const char *path, struct CmModel **out);

/**
 * # Safety
 * `model` must come from this library and `path` be a NUL-terminated string.
 */
enum CmStatus cm_model_save(const struct CmModel *model, const char *path);

/**
 * # Safety
 * `model` must be null or a handle from this library that has not been freed.
 */
void cm_model_free(struct CmModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum CmStatus cm_model_n_features(const struct CmModel *model, size_t *out);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum CmStatus cm_model_kind(const struct CmModel *model, enum CmModelKind *out);

/**
 * Predicts `n_rows` raw feature rows (row-major, `n_cols` each) in original target units.
 *
 * # Safety
 * `x` must hold `n_rows * n_cols` values and `out` room for `n_rows`.
 */
enum CmStatus cm_model_predict(const struct CmModel *model,
                               const double *x,
                               size_t n_rows,
                               size_t n_cols,
                               double *out);

/**
 * Fits a forest on every supplied row. Features are min-max scaled internally.
 *
 * # Safety
 * `x` must hold `n_rows * n_cols` values, `y` `n_rows` values, `params` a valid struct
 * and `out` be writable.
 */
enum CmStatus cm_forest_fit(const double *x,
                            const double *y,
                            size_t n_rows,
                            size_t n_cols,
                            const struct CmForestParams *params,
                            struct CmModel **out);

/**
 * Fits an ε-SVR on every supplied row. `converged` receives the solver outcome
 * when non-null; a model is returned either way.
 *
 * # Safety
 * As for `cm_forest_fit`; `converged` may be null.
 */
enum CmStatus cm_svr_fit(const double *x,
                         const double *y,
                         size_t n_rows,
                         size_t n_cols,
                         const struct CmSvrParams *params,
                         struct CmModel **out,
                         bool *converged);

/**
 * Regression metrics of `predicted` against `actual`.
 *
 * # Safety
 * Both arrays must hold `n` values and `out` be writable.
 */
enum CmStatus cm_metrics(const double *actual,
                         const double *predicted,
                         size_t n,
                         struct CmMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAKE_MOISTURE_H */
