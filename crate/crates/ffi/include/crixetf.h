#ifndef CRIXETF_H
#define CRIXETF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CrixStatus {
  CRIX_STATUS_OK = 0,
  CRIX_STATUS_NULL_POINTER = 1,
  CRIX_STATUS_INVALID_UTF8 = 2,
  CRIX_STATUS_IO = 3,
  CRIX_STATUS_PARSE = 4,
  CRIX_STATUS_INVALID_INPUT = 5,
  CRIX_STATUS_COMPUTATION = 6,
  CRIX_STATUS_PANIC = 7,
} CrixStatus;

/**
 * Opaque market dataset.
 */
typedef struct CrixDataset CrixDataset;

/**
 * Opaque fee schedule.
 */
typedef struct CrixFeeSchedule CrixFeeSchedule;

typedef struct CrixTradeCost {
  double notional;
  double fee;
  double spread_cost;
  double total;
} CrixTradeCost;

typedef struct CrixLineFit {
  double intercept;
  double slope;
  double loss;
  size_t observations;
} CrixLineFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *crix_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *crix_version(void);

/**
 * Loads prices, volumes and attention CSVs; `trades` may be null.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum CrixStatus crix_dataset_load(const char *prices,
                                  const char *volumes,
                                  const char *attention,
                                  const char *trades,
                                  struct CrixDataset **out_dataset);

/**
 * # Safety
 * `dataset` must be null or a handle from [`crix_dataset_load`] not yet freed.
 */
void crix_dataset_free(struct CrixDataset *dataset);

/**
 * # Safety
 * `dataset` must be a live handle; `out_count` must be writable.
 */
enum CrixStatus crix_dataset_asset_count(const struct CrixDataset *dataset, size_t *out_count);

/**
 * Price of `asset` on `date` (`YYYY-MM-DD`), falling back to the latest
 * observation inside the staleness window.
 *
 * # Safety
 * `dataset` must be a live handle; strings NUL-terminated; `out_price` writable.
 */
enum CrixStatus crix_dataset_price_at(const struct CrixDataset *dataset,
                                      const char *asset,
                                      const char *date,
                                      double *out_price);

/**
 * The bundled default fee schedule.
 *
 * # Safety
 * `out_schedule` must be writable.
 */
enum CrixStatus crix_fee_schedule_default(struct CrixFeeSchedule **out_schedule);

/**
 * Schedule from `len` (threshold, rate) pairs; thresholds start at 0 and
 * increase, rates do not increase.
 *
 * # Safety
 * `thresholds` and `rates` must point to `len` doubles; `out_schedule` writable.
 */
enum CrixStatus crix_fee_schedule_new(const double *thresholds,
                                      const double *rates,
                                      size_t len,
                                      struct CrixFeeSchedule **out_schedule);

/**
 * # Safety
 * `schedule` must be null or a live handle.
 */
void crix_fee_schedule_free(struct CrixFeeSchedule *schedule);

/**
 * # Safety
 * `schedule` must be a live handle; `out_rate` writable.
 */
enum CrixStatus crix_fee_rate(const struct CrixFeeSchedule *schedule,
                              double notional,
                              double *out_rate);

/**
 * # Safety
 * `schedule` must be a live handle; `out_cost` writable.
 */
enum CrixStatus crix_trade_cost(const struct CrixFeeSchedule *schedule,
                                double spread_fraction,
                                double notional,
                                double spread_share,
                                struct CrixTradeCost *out_cost);

/**
 * Least-squares line of spread fraction on notional.
 *
 * # Safety
 * Both arrays must hold `len` doubles; `out_fit` writable.
 */
enum CrixStatus crix_fit_ols(const double *notional,
                             const double *spread,
                             size_t len,
                             struct CrixLineFit *out_fit);

/**
 * Quantile line at level `tau` in (0, 1).
 *
 * # Safety
 * Both arrays must hold `len` doubles; `out_fit` writable.
 */
enum CrixStatus crix_fit_quantile(const double *notional,
                                  const double *spread,
                                  size_t len,
                                  double tau,
                                  struct CrixLineFit *out_fit);

/**
 * `intercept + slope * notional`.
 */
double crix_predict_spread(double intercept, double slope, double notional);

/**
 * `(reference_volume / target_volume)^(1/a)`.
 *
 * # Safety
 * `out_factor` must be writable.
 */
enum CrixStatus crix_scaling_factor(double reference_volume,
                                    double target_volume,
                                    double a,
                                    double *out_factor);

/**
 * Runs the configured backtests and writes all outputs into `out_dir`,
 * like `crixetf run-backtest`.
 *
 * # Safety
 * Both strings must be NUL-terminated.
 */
enum CrixStatus crix_run_backtest(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRIXETF_H */
