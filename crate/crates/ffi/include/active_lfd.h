#ifndef ACTIVE_LFD_H
#define ACTIVE_LFD_H

/* Generated by cbindgen from active-lfd-ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible FFI call.
 */
typedef enum AlfdStatus {
  AlfdOk = 0,
  AlfdNullPointer = 1,
  AlfdInvalidArgument = 2,
  AlfdIoError = 3,
  AlfdInternalError = 4,
} AlfdStatus;

/**
 * Opaque environment handle.
 */
typedef struct AlfdEnv AlfdEnv;

/**
 * Opaque policy handle (greedy mean-action evaluation).
 */
typedef struct AlfdPolicy AlfdPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Observation dimensionality (length of every `obs` buffer).
 */
uintptr_t alfd_obs_dim(void);

/**
 * Action dimensionality (length of every `action` buffer).
 */
uintptr_t alfd_act_dim(void);

/**
 * Message describing the most recent error on this thread; valid until the
 * next failing call on the same thread.
 */
const char *alfd_last_error(void);

/**
 * Creates an environment for a canonical scenario name (see the
 * `active-lfd scenarios` CLI command; `push_source` / `carry_source` are also
 * accepted). Returns null on error.
 */
struct AlfdEnv *alfd_env_new(const char *scenario_name);

void alfd_env_free(struct AlfdEnv *env);

/**
 * Resets the environment with the given seed and writes the initial
 * observation into `obs_out` (length `alfd_obs_dim()`).
 */
enum AlfdStatus alfd_env_reset(struct AlfdEnv *env, uint64_t seed, double *obs_out);

/**
 * Advances the environment by one step. `action` has length
 * `alfd_act_dim()`; `obs_out` receives the next observation; `terminal` and
 * `success` are written as 0/1.
 */
enum AlfdStatus alfd_env_step(struct AlfdEnv *env,
                              const double *action,
                              double *obs_out,
                              double *reward_out,
                              uint8_t *terminal_out,
                              uint8_t *success_out);

/**
 * Loads the actor network from a checkpoint file. Returns null on error.
 */
struct AlfdPolicy *alfd_policy_load(const char *path);

void alfd_policy_free(struct AlfdPolicy *policy);

/**
 * Writes the policy's greedy (mean) action for `obs` into `action_out`.
 */
enum AlfdStatus alfd_policy_mean_action(const struct AlfdPolicy *policy,
                                        const double *obs,
                                        double *action_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACTIVE_LFD_H */
