#ifndef BIOT_DD_H
#define BIOT_DD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a call.
typedef enum BiotDdStatus {
  BIOT_DD_STATUS_OK = 0,
  // A required pointer argument was null.
  BIOT_DD_STATUS_NULL_POINTER = 1,
  // An argument was out of range or not valid UTF-8.
  BIOT_DD_STATUS_INVALID_ARGUMENT = 2,
  // The configuration was rejected.
  BIOT_DD_STATUS_CONFIG = 3,
  // A file could not be read or written.
  BIOT_DD_STATUS_IO = 4,
  // An interface solver did not converge or a local system was singular.
  BIOT_DD_STATUS_SOLVER = 5,
  // The requested quantity does not exist for this run.
  BIOT_DD_STATUS_NOT_AVAILABLE = 6,
  // The caller's buffer is too small; the required length was written.
  BIOT_DD_STATUS_BUFFER_TOO_SMALL = 7,
  // Any other failure, including internal panics.
  BIOT_DD_STATUS_INTERNAL = 8,
} BiotDdStatus;

// Interface solver whose mean iteration count is queried.
typedef enum BiotDdSolver {
  // GMRES on the coupled interface problem.
  BIOT_DD_SOLVER_GMRES = 0,
  // CG on the elasticity interface problem.
  BIOT_DD_SOLVER_CG_ELASTICITY = 1,
  // CG on the Darcy interface problem.
  BIOT_DD_SOLVER_CG_DARCY = 2,
} BiotDdSolver;

// Run configuration.
typedef struct BiotDdConfig BiotDdConfig;

// Summary and final fields of a completed run.
typedef struct BiotDdResult BiotDdResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null if none. The
// pointer stays valid until the next failing call on this thread.
const char *biot_dd_last_error(void);

// Library version as a static string.
const char *biot_dd_version(void);

// Loads a TOML config file. Relative paths inside it resolve against its
// directory.
//
// # Safety
// `path` must be a null-terminated string; `out` must be writable.
enum BiotDdStatus biot_dd_config_load(const char *path, struct BiotDdConfig **out);

// Parses a config from TOML text.
//
// # Safety
// `toml` must be a null-terminated string; `out` must be writable.
enum BiotDdStatus biot_dd_config_parse(const char *toml, struct BiotDdConfig **out);

// Selects the scheme: "monolithic", "ds" or "fs".
//
// # Safety
// `config` must come from this library; `scheme` must be null-terminated.
enum BiotDdStatus biot_dd_config_set_scheme(struct BiotDdConfig *config, const char *scheme);

// Sets an `n x n` mesh split into `p x p` subdomains.
//
// # Safety
// `config` must come from this library.
enum BiotDdStatus biot_dd_config_set_mesh(struct BiotDdConfig *config,
                                          size_t cells,
                                          size_t subdomains);

// Sets the time step and number of steps.
//
// # Safety
// `config` must come from this library.
enum BiotDdStatus biot_dd_config_set_time(struct BiotDdConfig *config, double dt, size_t steps);

// Sets the storage coefficient `c0`.
//
// # Safety
// `config` must come from this library.
enum BiotDdStatus biot_dd_config_set_storativity(struct BiotDdConfig *config, double c0);

// Releases a config. Null is ignored.
//
// # Safety
// `config` must come from this library and not be used afterwards.
void biot_dd_config_free(struct BiotDdConfig *config);

// Runs a config. Files are written to `output_dir` if it is non-null,
// otherwise to the config's output directory if it has one.
//
// # Safety
// `config` must come from this library; `output_dir` is null or
// null-terminated; `out` must be writable.
enum BiotDdStatus biot_dd_run(const struct BiotDdConfig *config,
                              const char *output_dir,
                              struct BiotDdResult **out);

// Number of time steps taken.
//
// # Safety
// `result` must come from this library; `out` must be writable.
enum BiotDdStatus biot_dd_result_steps(const struct BiotDdResult *result, size_t *out);

// Mean iterations per step of `solver`; `NotAvailable` if the run's
// scheme does not use it.
//
// # Safety
// `result` must come from this library; `out` must be writable.
enum BiotDdStatus biot_dd_result_mean_iterations(const struct BiotDdResult *result,
                                                 enum BiotDdSolver solver,
                                                 double *out);

// Relative errors `[z, p, sigma, u]` against the exact solution;
// `NotAvailable` for problems without one.
//
// # Safety
// `result` must come from this library; `out` must hold 4 doubles.
enum BiotDdStatus biot_dd_result_errors(const struct BiotDdResult *result, double *out);

// Stability monitor ratio of the run.
//
// # Safety
// `result` must come from this library; `out` must be writable.
enum BiotDdStatus biot_dd_result_stability_ratio(const struct BiotDdResult *result, double *out);

// Copies the final cell-averaged pressure (global cell order, row by row
// from the bottom) into `buffer`. The number of cells is written to
// `len` in every case; `BufferTooSmall` if `capacity` is less.
//
// # Safety
// `result` must come from this library; `buffer` must hold `capacity`
// doubles (may be null when `capacity` is 0); `len` must be writable.
enum BiotDdStatus biot_dd_result_pressure(const struct BiotDdResult *result,
                                          double *buffer,
                                          size_t capacity,
                                          size_t *len);

// Releases a result. Null is ignored.
//
// # Safety
// `result` must come from this library and not be used afterwards.
void biot_dd_result_free(struct BiotDdResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BIOT_DD_H */
