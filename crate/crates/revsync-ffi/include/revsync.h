/* C interface of the revsync time-synchronization simulator.
 *
 * Link against the `revsync_ffi` cdylib or staticlib. Functions returning
 * RevsyncStatus report failures through the code and leave out-parameters
 * untouched; revsync_last_error() returns the calling thread's most recent
 * failure message, valid until the next failing call on that thread.
 */

#ifndef REVSYNC_H_INCLUDED
#define REVSYNC_H_INCLUDED

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum RevsyncStatus {
  REVSYNC_OK = 0,
  REVSYNC_NULL_POINTER = 1,
  REVSYNC_INVALID_UTF8 = 2,
  REVSYNC_INVALID_CONFIG = 3,
  REVSYNC_RUNTIME_ERROR = 4,
  REVSYNC_INTERNAL_PANIC = 5,
} RevsyncStatus;

/* Opaque run-report handle; free with revsync_report_free(). */
typedef struct RevsyncReport RevsyncReport;

/* Library version as a static NUL-terminated string. */
const char *revsync_version(void);

/* Most recent failure message of the calling thread. */
const char *revsync_last_error(void);

/* Run the single experiment described by a TOML document (the same format
 * the CLI consumes). seed_override replaces the configured seed when
 * non-negative. On success, *out_report receives a fresh handle. */
RevsyncStatus revsync_run_toml(const char *config_toml,
                               int64_t seed_override,
                               RevsyncReport **out_report);

/* Free a report handle; NULL is ignored. */
void revsync_report_free(RevsyncReport *report);

/* Post-warmup skew-estimation MSE; NaN when the scheme estimates no skew
 * or the handle is NULL. */
double revsync_report_skew_mse(const RevsyncReport *report);

/* Post-warmup measurement-time estimation MSE; NaN when absent or NULL. */
double revsync_report_meas_time_mse(const RevsyncReport *report);

/* Sensor-side message transmissions over the whole run; 0 on NULL. */
uint64_t revsync_report_n_tx(const RevsyncReport *report);

/* Sensor-side message receptions over the whole run; 0 on NULL. */
uint64_t revsync_report_n_rx(const RevsyncReport *report);

/* Cramer-Rao lower bound on the frequency-ratio estimate over a departure
 * design of `len` timestamps, white Gaussian delay noise of std `sigma`. */
RevsyncStatus revsync_crlb_skew(const double *departures,
                                size_t len,
                                double sigma,
                                double *out);

/* Cramer-Rao lower bound on the clock-offset estimate over a design. */
RevsyncStatus revsync_crlb_offset(const double *departures,
                                  size_t len,
                                  double sigma,
                                  double *out);

/* Lower bound attained by the cumulative-ratio estimator over an elapsed
 * departure span. */
RevsyncStatus revsync_cr_lower_bound(double departure_span,
                                     double sigma,
                                     double *out);

/* Best-case measurement-time error of the conventional two-way scheme:
 * (delay + elapsed) * skew uncompensated, elapsed * skew_error when
 * compensated (nonzero `compensated`). */
double revsync_predict_error_conventional(double elapsed_since_sync,
                                          double one_way_delay,
                                          double skew_or_error,
                                          int compensated);

/* Best-case measurement-time error of the reverse scheme:
 * (2 * delay + elapsed) * skew_error / 2. */
double revsync_predict_error_reverse(double elapsed_since_sync,
                                     double one_way_delay,
                                     double skew_error);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* REVSYNC_H_INCLUDED */
