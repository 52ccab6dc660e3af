#ifndef CONFDYN_H
#define CONFDYN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CdStatus {
  CD_STATUS_OK = 0,
  CD_STATUS_NULL_POINTER = 1,
  CD_STATUS_INVALID_ARGUMENT = 2,
  CD_STATUS_DIMENSION_MISMATCH = 3,
  CD_STATUS_INVALID_FIELD = 4,
  CD_STATUS_NUMERIC = 5,
  CD_STATUS_CONFIG = 6,
  CD_STATUS_FORMAT = 7,
  CD_STATUS_MISSING_FILE = 8,
  CD_STATUS_IO = 9,
  CD_STATUS_PANIC = 10,
} CdStatus;

typedef enum CdQuantileMode {
  CD_QUANTILE_MODE_SPLIT_QUANTILE = 0,
  CD_QUANTILE_MODE_MAX_SCORE = 1,
} CdQuantileMode;

/**
 * Square grid field.
 */
typedef struct CdField CdField;

/**
 * Trained linear surrogate.
 */
typedef struct CdModel CdModel;

typedef struct CdMetricReport {
  double mae;
  double rmse;
  double sharpness;
  double ma;
  double ra;
} CdMetricReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cd_version(void);

/**
 * Error message of the most recent call on this thread; empty after a
 * success. Valid until the next call into the library from the same thread.
 */
const char *cd_last_error_message(void);

/**
 * Builds a `size x size` field from `len` row-major values.
 *
 * # Safety
 * `values` must point to `len` readable doubles; `out_field` must be writable.
 */
enum CdStatus cd_field_new(size_t size,
                           const double *values,
                           size_t len,
                           struct CdField **out_field);

/**
 * # Safety
 * `field` must come from this library and not be freed already; null is ignored.
 */
void cd_field_free(struct CdField *field);

/**
 * Grid side length, or 0 for a null handle.
 *
 * # Safety
 * `field` must be null or a live handle.
 */
size_t cd_field_size(const struct CdField *field);

/**
 * Copies the values into `dst`, which must hold exactly `size * size` doubles.
 *
 * # Safety
 * `field` must be a live handle and `dst` must point to `len` writable doubles.
 */
enum CdStatus cd_field_values(const struct CdField *field, double *dst, size_t len);

/**
 * Quarter turn counter-clockwise.
 *
 * # Safety
 * `field` must be a live handle; `out_field` must be writable.
 */
enum CdStatus cd_field_rot90(const struct CdField *field, struct CdField **out_field);

/**
 * Nonconformity score between a prediction and the truth.
 *
 * # Safety
 * Both handles must be live; `out_score` must be writable.
 */
enum CdStatus cd_score(const struct CdField *pred, const struct CdField *truth, double *out_score);

/**
 * Weighted isotonic regression of `ys`; writes `n` fitted values to `out_fit`.
 *
 * # Safety
 * `ys` and `weights` must hold `n` doubles; `out_fit` must have room for `n`.
 */
enum CdStatus cd_pava(const double *ys, const double *weights, size_t n, double *out_fit);

/**
 * MAE, RMSE, sharpness, MA and RA of `n` Gaussian predictions.
 *
 * # Safety
 * `mu`, `sigma` and `y` must hold `n` doubles; `out_report` must be writable.
 */
enum CdStatus cd_metrics(const double *mu,
                         const double *sigma,
                         const double *y,
                         size_t n,
                         size_t n_grid,
                         struct CdMetricReport *out_report);

/**
 * Conformal radius of `n` calibration scores.
 *
 * # Safety
 * `scores` must hold `n` doubles; `out_q` must be writable.
 */
enum CdStatus cd_conformal_quantile(const double *scores,
                                    size_t n,
                                    double alpha,
                                    enum CdQuantileMode mode,
                                    double *out_q);

/**
 * `q / z` with `z` the two-sided Gaussian value for `alpha`, rounded to two
 * decimals unless `exact_z` is set.
 *
 * # Safety
 * `out_sigma` must be writable.
 */
enum CdStatus cd_gaussian_sigma(double q, double alpha, bool exact_z, double *out_sigma);

/**
 * Cosine-annealed learning rate at position `t` of a `cycle_len` cycle.
 *
 * # Safety
 * `out_lr` must be writable.
 */
enum CdStatus cd_lr_at(double eta_max, double eta_min, size_t cycle_len, size_t t, double *out_lr);

/**
 * Loads a model saved by the `confdyn` tool.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_model` must be writable.
 */
enum CdStatus cd_model_load(const char *path, struct CdModel **out_model);

/**
 * # Safety
 * `model` must come from this library and not be freed already; null is ignored.
 */
void cd_model_free(struct CdModel *model);

/**
 * Number of past frames the model reads, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t cd_model_window(const struct CdModel *model);

/**
 * Rolls the model forward `horizon` steps from `n` window frames, oldest
 * first. Writes `horizon` new field handles to `out_fields`.
 *
 * # Safety
 * `window` must hold `n` live field handles and `out_fields` must have room
 * for `horizon` pointers.
 */
enum CdStatus cd_model_rollout(const struct CdModel *model,
                               const struct CdField *const *window,
                               size_t n,
                               size_t horizon,
                               struct CdField **out_fields);

/**
 * Runs one experiment and writes its run directory. `config_path` may be
 * null for the defaults; `method` is `cp`, `dropout` or `ensemble`. The run
 * directory path is copied NUL-terminated into `dir_buf` when it is non-null
 * and large enough.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out_report` must be writable and
 * `dir_buf` must be null or hold `dir_buf_len` bytes.
 */
enum CdStatus cd_experiment_run(const char *config_path,
                                const char *method,
                                uint64_t seed,
                                struct CdMetricReport *out_report,
                                char *dir_buf,
                                size_t dir_buf_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONFDYN_H */
