#ifndef ACWB_H
#define ACWB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AcwbStatus {
  ACWB_STATUS_OK = 0,
  ACWB_STATUS_NULL_ARGUMENT = 1,
  ACWB_STATUS_INVALID_UTF8 = 2,
  ACWB_STATUS_DATA_ERROR = 3,
  ACWB_STATUS_FIT_ERROR = 4,
  ACWB_STATUS_CONFIG_ERROR = 5,
  ACWB_STATUS_IO_ERROR = 6,
  ACWB_STATUS_BUFFER_TOO_SMALL = 7,
  ACWB_STATUS_PANIC = 8,
} AcwbStatus;

/**
 * Opaque fitted model.
 */
typedef struct AcwbHandle AcwbHandle;

/**
 * Stage-wise complexity summary of a model (the first class for multiclass).
 */
typedef struct AcwbComplexity {
  double rho_uni;
  double rho_pint;
  double rho_deep;
  double risk_initial;
  double risk_uni;
  double risk_pint;
  double risk_deep;
} AcwbComplexity;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *acwb_version(void);

/**
 * Message of the last failed call on this thread, or null if the last call
 * succeeded. The pointer stays valid until the next call on this thread.
 */
const char *acwb_last_error_message(void);

/**
 * Fit a model on a CSV file.
 *
 * `task` may be null or `auto` (inferred from the target), `regression`,
 * `binary` or `multiclass`. `config` may be null or `key = value` lines in the
 * configuration file format.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum AcwbStatus acwb_model_train_csv(const char *path,
                                     const char *target,
                                     const char *task,
                                     const char *config,
                                     struct AcwbHandle **out);

/**
 * # Safety
 * `path` must be null or NUL-terminated; `out` must be writable.
 */
enum AcwbStatus acwb_model_load(const char *path, struct AcwbHandle **out);

/**
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum AcwbStatus acwb_model_save(const struct AcwbHandle *model, const char *path);

/**
 * Predict every row of a CSV file.
 *
 * Writes the additive score to `scores` and, when `probabilities` is not
 * null, the class probability (NaN for regression). Both buffers hold
 * `capacity` doubles. `out_len` always receives the row count; if it exceeds
 * `capacity` the call returns `BufferTooSmall` and writes nothing else.
 *
 * # Safety
 * Buffers must hold `capacity` doubles; `out_len` must be writable.
 */
enum AcwbStatus acwb_model_predict_csv(const struct AcwbHandle *model,
                                       const char *path,
                                       double *scores,
                                       double *probabilities,
                                       size_t capacity,
                                       size_t *out_len);

/**
 * Same as [`acwb_model_predict_csv`] with CSV text held in memory.
 *
 * # Safety
 * See [`acwb_model_predict_csv`]; `csv` must be NUL-terminated.
 */
enum AcwbStatus acwb_model_predict_csv_buffer(const struct AcwbHandle *model,
                                              const char *csv,
                                              double *scores,
                                              double *probabilities,
                                              size_t capacity,
                                              size_t *out_len);

/**
 * # Safety
 * `model` must come from this library; `out` must be writable.
 */
enum AcwbStatus acwb_model_complexity(const struct AcwbHandle *model, struct AcwbComplexity *out);

/**
 * Release a model. Null is accepted and ignored.
 *
 * # Safety
 * `model` must be null or a handle from this library not already freed.
 */
void acwb_model_free(struct AcwbHandle *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACWB_H */
