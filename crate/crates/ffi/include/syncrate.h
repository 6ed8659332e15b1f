#ifndef SYNCRATE_H
#define SYNCRATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SrStatus {
  SR_STATUS_OK = 0,
  SR_STATUS_INVALID_ARGUMENT = 1,
  SR_STATUS_INSTANCE_TOO_LARGE = 2,
  SR_STATUS_NOT_ENCODABLE = 3,
  SR_STATUS_BUDGET_EXHAUSTS_RATES = 4,
  SR_STATUS_NULL_POINTER = 5,
  SR_STATUS_ORACLE_FAILED = 6,
  SR_STATUS_INTERNAL = 7,
} SrStatus;

/**
 * Opaque system model.
 */
typedef struct SrModel SrModel;

/**
 * Performance oracle supplied by the caller. Writes the observed value for
 * `rates` in `slot` to `psi_out` and returns 0, or returns nonzero to abort.
 */
typedef int32_t (*SrOracleFn)(void *ctx,
                              const uint32_t *rates,
                              size_t len,
                              uint64_t slot,
                              double *psi_out);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Create a model. `pair_costs` may be null for unit costs; otherwise it
 * holds `C(C−1)` entries.
 */
enum SrStatus sr_model_new(const double *change_rates,
                           size_t controllers,
                           double slot_seconds,
                           const uint64_t *pair_costs,
                           uint64_t budget,
                           uint32_t max_rate,
                           struct SrModel **out);

void sr_model_free(struct SrModel *model);

/**
 * Number of ordered pairs, `C(C−1)`; 0 for a null model.
 */
size_t sr_model_pair_count(const struct SrModel *model);

enum SrStatus sr_consistency_level(const struct SrModel *model,
                                   const uint32_t *rates,
                                   size_t len,
                                   double *out);

enum SrStatus sr_policy_cost(const struct SrModel *model,
                             const uint32_t *rates,
                             size_t len,
                             uint64_t *out);

/**
 * Rates maximizing consistency within the model's budget. `eps <= 0`
 * solves exactly; otherwise the approximation scheme with that `ε` is used.
 */
enum SrStatus sr_solve_obj1(const struct SrModel *model,
                            double eps,
                            uint32_t *rates_out,
                            size_t len);

enum SrStatus sr_homogeneous_policy(const struct SrModel *model, uint32_t *rates_out, size_t len);

/**
 * Expected approximation factor of the learner.
 */
double sr_expected_bound(size_t controllers,
                         uint64_t budget,
                         uint32_t max_rate,
                         size_t sigma,
                         double mu);

/**
 * High-probability factor and its probability. `with_mu != 0` selects the
 * probability form that includes `μ`.
 */
enum SrStatus sr_high_prob_bound(size_t controllers,
                                 uint64_t budget,
                                 uint32_t max_rate,
                                 size_t sigma,
                                 uint64_t tau,
                                 double mu,
                                 double gamma,
                                 int32_t with_mu,
                                 double *factor_out,
                                 double *probability_out);

/**
 * Training slots used by the learner, `τ + σ·τ·B`.
 */
uint64_t sr_training_time(uint64_t sigma, uint64_t tau, uint64_t budget);

/**
 * Run the stochastic greedy learner against a caller-supplied oracle. The
 * callback is invoked once per slot, slots `1, 2, …` in order.
 */
enum SrStatus sr_stochastic_greedy(size_t controllers,
                                   size_t sigma,
                                   uint64_t tau,
                                   uint64_t budget,
                                   uint32_t max_rate,
                                   uint64_t seed,
                                   SrOracleFn oracle,
                                   void *ctx,
                                   uint32_t *rates_out,
                                   size_t len,
                                   uint64_t *slots_used_out);

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to fit). Returns the full message length excluding the NUL.
 */
size_t sr_last_error_message(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SYNCRATE_H */
