#ifndef FEDDPMS_H
#define FEDDPMS_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code for every exported function.
 */
typedef enum FdpStatus {
  FDP_STATUS_OK = 0,
  FDP_STATUS_NULL_POINTER = 1,
  FDP_STATUS_INVALID_ARGUMENT = 2,
  FDP_STATUS_INVALID_CONFIG = 3,
  FDP_STATUS_IO = 4,
  FDP_STATUS_RUNTIME = 5,
  FDP_STATUS_PANIC = 6,
} FdpStatus;

/**
 * Experiment configuration handle.
 */
typedef struct FdpConfig FdpConfig;

/**
 * Finished experiment handle: per-seed round histories and summaries.
 */
typedef struct FdpRun FdpRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *fdp_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void fdp_string_free(char *s);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum FdpStatus fdp_config_default(struct FdpConfig **out);

/**
 * Parse a TOML document; missing keys take their defaults.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FdpStatus fdp_config_from_toml(const char *text, struct FdpConfig **out);

/**
 * Set one key. `value` is a TOML literal, e.g. `0.3`, `"fedavg"`, `true`.
 * The config is left unchanged if the result does not validate.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` must be
 * NUL-terminated strings.
 */
enum FdpStatus fdp_config_set(struct FdpConfig *cfg, const char *key, const char *value);

/**
 * Serialize the config to TOML; free the result with [`fdp_string_free`].
 *
 * # Safety
 * `cfg` must come from this library and `out` must be a valid pointer.
 */
enum FdpStatus fdp_config_to_toml(const struct FdpConfig *cfg, char **out);

/**
 * # Safety
 * `cfg` must be NULL or come from this library, and not be used again.
 */
void fdp_config_free(struct FdpConfig *cfg);

/**
 * Run every trial of the configured experiment. Nothing is written to disk.
 *
 * # Safety
 * `cfg` must come from this library and `out` must be a valid pointer.
 */
enum FdpStatus fdp_run_experiment(const struct FdpConfig *cfg, struct FdpRun **out);

/**
 * # Safety
 * `run` must come from this library and `out` must be a valid pointer.
 */
enum FdpStatus fdp_run_trial_count(const struct FdpRun *run, size_t *out);

/**
 * # Safety
 * `run` must come from this library and `out` must be a valid pointer.
 */
enum FdpStatus fdp_run_round_count(const struct FdpRun *run, size_t trial_index, size_t *out);

/**
 * Test accuracy after round `round` of trial `trial_index`.
 *
 * # Safety
 * `run` must come from this library and `out` must be a valid pointer.
 */
enum FdpStatus fdp_run_round_accuracy(const struct FdpRun *run,
                                      size_t trial_index,
                                      size_t round,
                                      double *out);

/**
 * Final accuracy averaged over trials.
 *
 * # Safety
 * `run` must come from this library and `out` must be a valid pointer.
 */
enum FdpStatus fdp_run_final_accuracy(const struct FdpRun *run, double *out);

/**
 * JSON summary of the run; free the result with [`fdp_string_free`].
 *
 * # Safety
 * `run` must come from this library and `out` must be a valid pointer.
 */
enum FdpStatus fdp_run_summary_json(const struct FdpRun *run, char **out);

/**
 * Write per-seed CSVs and the JSON summary into `dir`, or into the
 * configured output directory when `dir` is NULL.
 *
 * # Safety
 * `run` must come from this library; `dir` must be NULL or a
 * NUL-terminated string.
 */
enum FdpStatus fdp_run_write_outputs(const struct FdpRun *run, const char *dir);

/**
 * # Safety
 * `run` must be NULL or come from this library, and not be used again.
 */
void fdp_run_free(struct FdpRun *run);

/**
 * Smallest mechanism σ giving (ε, δ)-DP for a sensitivity-1 query.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FdpStatus fdp_calibrate_sigma(double epsilon, double delta, double *out);

/**
 * δ achieved by mechanism σ at privacy level ε.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FdpStatus fdp_delta_for(double sigma, double epsilon, double *out);

/**
 * L2 sensitivity of a mean over `m` codes in the unit cube.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FdpStatus fdp_sensitivity(size_t m, double *out);

/**
 * Latent-sharing traffic relative to one model exchange.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FdpStatus fdp_comm_r1(size_t alpha, size_t n, size_t latent_dim, double theta, double *out);

/**
 * Expected number of first-time decoder downloads.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FdpStatus fdp_expected_downloads(double nu,
                                      size_t k,
                                      size_t rounds,
                                      size_t prelim_rounds,
                                      double *out);

/**
 * Decoder traffic relative to baseline model traffic.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FdpStatus fdp_comm_r2(double nu, size_t rounds, size_t prelim_rounds, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FEDDPMS_H */
