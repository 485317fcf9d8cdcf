#ifndef PUSHSUM_RATES_H
#define PUSHSUM_RATES_H

/* Generated by cbindgen from pushsum-rates-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every API function.
typedef enum PsrStatus {
  PSR_OK = 0,
  // A required pointer argument was null.
  PSR_NULL_POINTER = 1,
  // Configuration or argument validation failed.
  PSR_INVALID_ARGUMENT = 2,
  // Input outside the mathematical domain (zero vector, non-probability
  // vector, missing witness structure).
  PSR_DOMAIN_ERROR = 3,
  // The process delivers nothing (drop rate 1).
  PSR_DEGENERATE_PROCESS = 4,
  // The product never became weakly primitive within the horizon.
  PSR_NOT_PRIMITIVE = 5,
  // Any other runtime failure; see `psr_last_error_message`.
  PSR_RUNTIME_ERROR = 6,
  // The argument was not valid UTF-8.
  PSR_UTF8_ERROR = 7,
  // A panic was caught at the boundary.
  PSR_PANIC = 8,
} PsrStatus;

// Opaque consensus simulation: a protocol instance, its state, and the
// seeded step sampler from one JSON configuration.
typedef struct PsrSimulation PsrSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread. The pointer stays
// valid until the next failing call on the same thread; do not free it.
const char *psr_last_error_message(void);

// Releases a string returned through a `char**` out-parameter.
//
// # Safety
// `s` must be a pointer previously returned by this library and not yet
// freed, or null (a no-op).
void psr_string_free(char *s);

// Hilbert projective distance between two nonnegative vectors of length
// `len`; `+inf` when the vectors lie on different faces of the cone.
//
// # Safety
// `x` and `y` must point to `len` readable doubles, `out` to a writable
// double.
enum PsrStatus psr_hilbert_distance(const double *x, const double *y, size_t len, double *out);

// Birkhoff contraction coefficient of a row-major `dim × dim` nonnegative
// matrix.
//
// # Safety
// `entries` must point to `dim * dim` readable doubles, `out` to a writable
// double.
enum PsrStatus psr_tau(const double *entries, size_t dim, double *out);

// Runs the full rate experiment for a JSON configuration document and
// returns the report as JSON.
//
// # Safety
// `config_json` must be a NUL-terminated string, `out_json` a writable
// pointer slot; the result must be freed with [`psr_string_free`].
enum PsrStatus psr_rates_run_json(const char *config_json, char **out_json);

// Verifies the rate-theory hypotheses for a JSON configuration document and
// returns the verdict as JSON.
//
// # Safety
// As for [`psr_rates_run_json`].
enum PsrStatus psr_check_json(const char *config_json, char **out_json);

// Creates a simulation from the JSON configuration document.
//
// # Safety
// `config_json` must be NUL-terminated; `out` must be a writable slot. The
// handle must be released with [`psr_simulation_free`].
enum PsrStatus psr_simulation_new(const char *config_json, struct PsrSimulation **out);

// Advances the simulation by `n_steps` sampled protocol steps.
//
// # Safety
// `sim` must be a live handle from [`psr_simulation_new`].
enum PsrStatus psr_simulation_step(struct PsrSimulation *sim, uint64_t n_steps);

// Number of real (non-buffer) nodes.
//
// # Safety
// `sim` must be a live handle, `out` writable.
enum PsrStatus psr_simulation_node_count(const struct PsrSimulation *sim, size_t *out);

// Consensus target `Σx₀ / Σw₀`.
//
// # Safety
// `sim` must be a live handle, `out` writable.
enum PsrStatus psr_simulation_target(const struct PsrSimulation *sim, double *out);

// Writes the per-node ratios `x_i / w_i` into `out`; nodes whose weight has
// no support yet are written as NaN.
//
// # Safety
// `sim` must be a live handle and `out` must point to at least `len`
// writable doubles with `len` equal to the node count.
enum PsrStatus psr_simulation_ratios(const struct PsrSimulation *sim, double *out, size_t len);

// Releases a simulation handle.
//
// # Safety
// `sim` must come from [`psr_simulation_new`] and not be freed twice; null
// is a no-op.
void psr_simulation_free(struct PsrSimulation *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PUSHSUM_RATES_H */
