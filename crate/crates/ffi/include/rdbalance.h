#ifndef RDBALANCE_H
#define RDBALANCE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum RdbStatus {
  RDB_STATUS_OK = 0,
  RDB_STATUS_NULL_POINTER = 1,
  RDB_STATUS_INVALID_INPUT = 2,
  RDB_STATUS_NON_FINITE = 3,
  RDB_STATUS_NON_POSITIVE_LOSS = 4,
  RDB_STATUS_DIMENSION_MISMATCH = 5,
  RDB_STATUS_SINGULAR_GRAM = 6,
  RDB_STATUS_DIVERGED = 7,
  RDB_STATUS_FINGERPRINT_MISMATCH = 8,
  RDB_STATUS_INVALID_CURVE = 9,
  RDB_STATUS_CONFIG = 10,
  RDB_STATUS_IO = 11,
  RDB_STATUS_SERIALIZATION = 12,
  RDB_STATUS_BUFFER_TOO_SMALL = 13,
  RDB_STATUS_PANIC = 14,
} RdbStatus;

/**
 * Opaque R-D curve.
 */
typedef struct RdbCurve RdbCurve;

/**
 * Opaque parsed and validated experiment configuration.
 */
typedef struct RdbExperiment RdbExperiment;

/**
 * Opaque result of a training run.
 */
typedef struct RdbOutcome RdbOutcome;

/**
 * Opaque logit state of the trajectory weighting scheme.
 */
typedef struct RdbTrajectory RdbTrajectory;

/**
 * Work counters of a training run.
 */
typedef struct RdbCounters {
  uint64_t iterations;
  uint64_t loss_evals;
  uint64_t grad_evals;
  uint64_t gram_builds;
  uint64_t balanced_directions;
  uint64_t logit_updates;
} RdbCounters;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *rdb_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rdb_version(void);

/**
 * Balanced direction `c (w_R ∇L_R / L_R + w_D ∇L_D / L_D)` with
 * `w = (w_rate, 1 - w_rate)`. With `renormalize` false, `c = 1`.
 * `out_direction` holds `dim` values; `out_c` may be NULL.
 */
enum RdbStatus rdb_balanced_direction(double w_rate,
                                      double loss_rate,
                                      double loss_distortion,
                                      const double *grad_rate,
                                      const double *grad_distortion,
                                      size_t dim,
                                      bool renormalize,
                                      double *out_direction,
                                      double *out_c);

/**
 * Closed-form QP weights for the Gram matrix `[[q11, q12], [q12, q22]]`.
 * `out_raw` receives the pre-projection weights (which may be negative),
 * `out_weights` their softmax projection onto the simplex; each holds two
 * values. `out_raw` and `out_kkt_lambda` may be NULL.
 */
enum RdbStatus rdb_qp_weights(double q11,
                              double q22,
                              double q12,
                              double *out_raw,
                              double *out_kkt_lambda,
                              double *out_weights);

/**
 * New trajectory state with logits `(xi_rate, xi_distortion)`.
 */
enum RdbStatus rdb_trajectory_new(double xi_rate,
                                  double xi_distortion,
                                  double beta,
                                  double gamma,
                                  struct RdbTrajectory **out);

/**
 * Current simplex weights, two values.
 */
enum RdbStatus rdb_trajectory_weights(const struct RdbTrajectory *state, double *out_weights);

/**
 * Advance the logits from the losses before and after a step, both
 * measured on the same batch.
 */
enum RdbStatus rdb_trajectory_update(struct RdbTrajectory *state,
                                     double prev_rate,
                                     double prev_distortion,
                                     double next_rate,
                                     double next_distortion);

void rdb_trajectory_free(struct RdbTrajectory *state);

/**
 * Curve from `n` (rate, quality) pairs in any order.
 */
enum RdbStatus rdb_curve_new(const double *rates,
                             const double *qualities,
                             size_t n,
                             struct RdbCurve **out);

void rdb_curve_free(struct RdbCurve *curve);

/**
 * BD-Rate of `test` against `anchor`, in percent (negative is better).
 */
enum RdbStatus rdb_bd_rate(const struct RdbCurve *anchor,
                           const struct RdbCurve *test,
                           double *out_percent);

/**
 * Parse and validate an experiment from TOML text.
 */
enum RdbStatus rdb_experiment_from_toml(const char *toml, struct RdbExperiment **out);

/**
 * Write the config fingerprint (64 hex digits and a NUL) into `buf`.
 */
enum RdbStatus rdb_experiment_fingerprint(const struct RdbExperiment *experiment,
                                          char *buf,
                                          size_t len);

/**
 * Train the experiment in memory. Honors `train.fine_tune_from`; writes no
 * files.
 */
enum RdbStatus rdb_experiment_train(const struct RdbExperiment *experiment,
                                    struct RdbOutcome **out);

void rdb_experiment_free(struct RdbExperiment *experiment);

/**
 * Number of trace records (iterations).
 */
enum RdbStatus rdb_outcome_iterations(const struct RdbOutcome *outcome, uint64_t *out_n);

/**
 * Losses and weights of trace record `index`. Any output may be NULL.
 */
enum RdbStatus rdb_outcome_record(const struct RdbOutcome *outcome,
                                  uint64_t index,
                                  double *out_losses,
                                  double *out_weights);

/**
 * Final parameters. Call with `buf = NULL` to query the length in
 * `out_len`.
 */
enum RdbStatus rdb_outcome_theta(const struct RdbOutcome *outcome,
                                 double *buf,
                                 size_t len,
                                 size_t *out_len);

enum RdbStatus rdb_outcome_counters(const struct RdbOutcome *outcome,
                                    struct RdbCounters *out_counters);

/**
 * Save the final checkpoint as JSON.
 */
enum RdbStatus rdb_outcome_save_checkpoint(const struct RdbOutcome *outcome, const char *path);

void rdb_outcome_free(struct RdbOutcome *outcome);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RDBALANCE_H */
