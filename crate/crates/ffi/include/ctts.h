#ifndef CTTS_H
#define CTTS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Baselines available through [`ctts_baseline_predict`].
 */
typedef enum CttsBaseline {
  CTTS_BASELINE_ARIMA = 0,
  CTTS_BASELINE_EMA = 1,
} CttsBaseline;

/**
 * Result code of every call.
 */
typedef enum CttsStatus {
  CTTS_STATUS_OK = 0,
  CTTS_STATUS_NULL_POINTER = 1,
  CTTS_STATUS_INVALID_ARGUMENT = 2,
  CTTS_STATUS_IO = 3,
  CTTS_STATUS_CHECKPOINT = 4,
  CTTS_STATUS_NUMERICAL = 5,
  CTTS_STATUS_DEGENERATE_WINDOW = 6,
  CTTS_STATUS_PANIC = 7,
} CttsStatus;

/**
 * Opaque trained model.
 */
typedef struct CttsModel CttsModel;

/**
 * Class probabilities in `Down, Flat, Up` order and the predicted sign.
 */
typedef struct CttsPrediction {
  double probs[3];
  /**
   * -1, 0 or 1.
   */
  int8_t predicted_sign;
  double confidence;
} CttsPrediction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next call on the same thread.
 */
const char *ctts_last_error(void);

/**
 * Loads a checkpoint file into a new handle written to `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum CttsStatus ctts_model_load(const char *path, struct CttsModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`ctts_model_load`] and not be used afterwards.
 */
void ctts_model_free(struct CttsModel *model);

/**
 * Number of raw prices [`ctts_model_predict`] expects, or 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t ctts_model_window_len(const struct CttsModel *model);

/**
 * Classifies the move after `len` raw prices. The window is min-max scaled
 * and its log-return volatility picks the kernel.
 *
 * # Safety
 * `model` must be a live handle, `prices` must point to `len` doubles and
 * `out` must be valid.
 */
enum CttsStatus ctts_model_predict(const struct CttsModel *model,
                                   const double *prices,
                                   size_t len,
                                   struct CttsPrediction *out);

/**
 * Fits a baseline to the window and classifies the next move. ARIMA uses
 * orders `(p, d, q)`; EMA ignores them.
 *
 * # Safety
 * `prices` must point to `len` doubles and `out` must be valid.
 */
enum CttsStatus ctts_baseline_predict(enum CttsBaseline kind,
                                      const double *prices,
                                      size_t len,
                                      size_t p,
                                      size_t d,
                                      size_t q,
                                      double neutral_band,
                                      struct CttsPrediction *out);

/**
 * Sign of the move from `p_last` to `p_next` with a relative flat band.
 *
 * # Safety
 * `out` must be valid.
 */
enum CttsStatus ctts_label_sign(double p_next, double p_last, double neutral_band, int8_t *out);

/**
 * Volatility-driven kernel size.
 *
 * # Safety
 * `out` must be valid.
 */
enum CttsStatus ctts_select_kernel(double sigma_t,
                                   double sigma_max,
                                   size_t k_min,
                                   size_t k_max,
                                   size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CTTS_H */
