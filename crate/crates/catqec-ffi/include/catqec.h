#ifndef CATQEC_H
#define CATQEC_H

/* Generated by cbindgen from the catqec-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible entry point.
 */
typedef enum {
  CATQEC_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  CATQEC_STATUS_NULL_POINTER = 1,
  /**
   * Arguments were structurally valid but rejected by the model; details
   * via `catqec_last_error`.
   */
  CATQEC_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A caller-provided buffer is too small; the required size is reported
   * through the documented out-parameter.
   */
  CATQEC_STATUS_BUFFER_TOO_SMALL = 3,
  /**
   * An internal failure (caught panic); details via `catqec_last_error`.
   */
  CATQEC_STATUS_INTERNAL = 4,
} CatqecStatus;

/**
 * Monitoring regime at a given measurement interval.
 */
typedef enum {
  /**
   * The wait is within the instrument overhead (mapping + readout +
   * feedback).
   */
  CATQEC_REGIME_FAST = 0,
  /**
   * Waits long enough that coherence, not the instrument, dominates.
   */
  CATQEC_REGIME_OPTIMIZED = 1,
} CatqecRegime;

/**
 * Opaque handle to a Bayesian record-confidence table.
 */
typedef struct CatqecConfidenceTable CatqecConfidenceTable;

/**
 * Opaque handle to a system-parameter set.
 */
typedef struct CatqecParams CatqecParams;

/**
 * One cadence optimum; the wait schedule itself is copied into the caller
 * buffer of [`catqec_optimize_cadence`].
 */
typedef struct {
  /**
   * Optimal number of parity-measurement steps.
   */
  uintptr_t steps;
  /**
   * Mean expected photon jumps per step.
   */
  double lambda_per_step;
  /**
   * Predicted process fidelity, the product of the four factors below.
   */
  double predicted_f;
  /**
   * Ancilla-excitation survival.
   */
  double f_gamma_up;
  /**
   * Encode/decode floor.
   */
  double f_ed;
  /**
   * Monitored-evolution component.
   */
  double f_t;
  /**
   * Kerr-dephasing component.
   */
  double f_kd;
} CatqecCadence;

/**
 * Per-channel lifetime gains, mirroring the CSV emitted by the CLI.
 */
typedef struct {
  double t_m;
  double nbar;
  CatqecRegime regime;
  /**
   * Double jumps within one interval (uncorrectable).
   */
  double g_2eps;
  /**
   * Storage thermal excitations (uncorrectable).
   */
  double g_up_s;
  /**
   * Readout-error channel of the active regime.
   */
  double g_readout;
  /**
   * Ancilla-preparation channel of the active regime.
   */
  double g_up_a;
  /**
   * Kerr phase uncertainty of the corrected jump.
   */
  double g_kerr;
  /**
   * Forward propagation of ancilla decay.
   */
  double g_fp;
  /**
   * Fock-encoding reference lifetime (µs).
   */
  double tau_f01;
} CatqecLossBudget;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The library version as a static NUL-terminated string.
 */
const char *catqec_version(void);

/**
 * Message describing the most recent failure on the calling thread (empty
 * before the first failure). The pointer stays valid until the next failing
 * call on the same thread.
 */
const char *catqec_last_error(void);

/**
 * Create a parameter handle holding the reference device values.
 */
CatqecParams *catqec_params_new(void);

/**
 * Create a parameter handle from a flat `key = value` document using the
 * same keys as the CLI configuration (for example `system.tau_s = 300`).
 * Unknown keys are rejected.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a valid pointer.
 */
CatqecStatus catqec_params_parse(const char *text, CatqecParams **out);

/**
 * Release a parameter handle. A null pointer is ignored.
 *
 * # Safety
 * `params` must be a pointer returned by `catqec_params_new` or
 * `catqec_params_parse` that has not already been freed.
 */
void catqec_params_free(CatqecParams *params);

/**
 * Lifetime gain `G` of the monitored cat under the handle's parameters.
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
CatqecStatus catqec_gain(const CatqecParams *params, double *out);

/**
 * Break-even ratio `2G/(3 n̄₀)` against the Fock-encoding reference.
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
CatqecStatus catqec_break_even_ratio(const CatqecParams *params, double nbar0, double *out);

/**
 * Optimise the monitoring cadence for a total time.
 *
 * Always fills `out` on success of the underlying optimisation; the
 * per-step waits are additionally copied into `schedule` when
 * `schedule_capacity >= out->steps`. When the buffer is too small the call
 * returns `CATQEC_STATUS_BUFFER_TOO_SMALL` with `out` filled, so
 * `out->steps` is the required capacity — pass a null `schedule` with
 * capacity 0 to probe.
 *
 * # Safety
 * `params` and `out` must be valid; `schedule` must point to at least
 * `schedule_capacity` doubles, or be null when the capacity is 0.
 */
CatqecStatus catqec_optimize_cadence(const CatqecParams *params,
                                     double t_total,
                                     double nbar0,
                                     CatqecCadence *out,
                                     double *schedule,
                                     uintptr_t schedule_capacity);

/**
 * Build the record-confidence table for a `steps`-step monitor. The handle
 * must be released with [`catqec_confidence_table_free`].
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
CatqecStatus catqec_bayes_records(const CatqecParams *params,
                                  double nbar0,
                                  double t_w,
                                  uintptr_t steps,
                                  double f_g,
                                  double f_e,
                                  CatqecConfidenceTable **out);

/**
 * Number of records in the table; 0 for a null handle.
 *
 * # Safety
 * `table` must be null or a live confidence-table handle.
 */
uintptr_t catqec_confidence_table_len(const CatqecConfidenceTable *table);

/**
 * Posterior single-step confidences. Either output may be null to skip it.
 *
 * # Safety
 * `table` must be a live handle; non-null outputs must be valid pointers.
 */
CatqecStatus catqec_confidence_table_confidences(const CatqecConfidenceTable *table,
                                                 double *q_g,
                                                 double *q_e);

/**
 * Copy record `index` out of the table: the NUL-terminated bit string
 * (`bits_capacity` must be at least steps + 1 bytes), its probability, and
 * its conditional success. `probability` and `conditional` may be null.
 *
 * # Safety
 * `table` must be a live handle; `bits` must point to `bits_capacity`
 * writable bytes; non-null number outputs must be valid pointers.
 */
CatqecStatus catqec_confidence_table_entry(const CatqecConfidenceTable *table,
                                           uintptr_t index,
                                           char *bits,
                                           uintptr_t bits_capacity,
                                           double *probability,
                                           double *conditional);

/**
 * Release a confidence-table handle. A null pointer is ignored.
 *
 * # Safety
 * `table` must be a pointer returned by `catqec_bayes_records` that has not
 * already been freed.
 */
void catqec_confidence_table_free(CatqecConfidenceTable *table);

/**
 * Per-channel loss budget at mean photon number `nbar` and measurement
 * interval `t_m` (µs).
 *
 * # Safety
 * `params` and `out` must be valid pointers.
 */
CatqecStatus catqec_loss_budget(const CatqecParams *params,
                                double nbar,
                                double t_m,
                                CatqecLossBudget *out);

/**
 * Monte-Carlo record frequencies of the phenomenological plant over a wait
 * schedule of `steps` entries.
 *
 * `frequencies` is indexed by the record read as a binary number with the
 * first step in the most significant bit, and needs `1 << steps` slots.
 * Results are deterministic in (`seed`, arguments) and independent of the
 * thread count.
 *
 * # Safety
 * `params` must be a live handle; `schedule` must point to `steps` doubles;
 * `frequencies` must point to `capacity` writable doubles.
 */
CatqecStatus catqec_record_frequencies(const CatqecParams *params,
                                       double nbar0,
                                       const double *schedule,
                                       uintptr_t steps,
                                       uintptr_t shots,
                                       uint64_t seed,
                                       double *frequencies,
                                       uintptr_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CATQEC_H */
