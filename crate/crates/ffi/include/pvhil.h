#ifndef PVHIL_H
#define PVHIL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of an FFI call.
 */
typedef enum PvhilStatus {
  PVHIL_STATUS_OK = 0,
  /**
   * Bad scenario or parameter values.
   */
  PVHIL_STATUS_VALIDATION = 1,
  /**
   * Simulation, transport or I/O failure.
   */
  PVHIL_STATUS_RUNTIME = 2,
  /**
   * Relay oracle disagreed with the online relay.
   */
  PVHIL_STATUS_ORACLE = 3,
  /**
   * Null pointer, bad UTF-8 or out-of-range selector.
   */
  PVHIL_STATUS_INVALID_ARGUMENT = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  PVHIL_STATUS_PANIC = 5,
} PvhilStatus;

/**
 * Time series selectable with [`pvhil_run_series`].
 */
typedef enum PvhilSeries {
  PVHIL_SERIES_TIME = 0,
  PVHIL_SERIES_VOLTAGE = 1,
  PVHIL_SERIES_FREQUENCY = 2,
  PVHIL_SERIES_ROCOF = 3,
} PvhilSeries;

/**
 * Finished run with its metrics.
 */
typedef struct PvhilRun PvhilRun;

/**
 * Parsed, validated scenario.
 */
typedef struct PvhilScenario PvhilScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pvhil_version(void);

/**
 * Copies the last error message of this thread into `buf` (truncated and
 * NUL-terminated) and returns its full length, or 0 when there is none.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t pvhil_last_error(char *buf, size_t len);

/**
 * Scenario with every field at its default.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum PvhilStatus pvhil_scenario_default(struct PvhilScenario **out);

/**
 * Parses a JSON scenario. Relative feeder paths resolve against
 * `base_dir`, which may be null for the working directory.
 *
 * # Safety
 * `json` must be a NUL-terminated string, `base_dir` null or one, and `out`
 * valid writable storage.
 */
enum PvhilStatus pvhil_scenario_from_json(const char *json,
                                          const char *base_dir,
                                          struct PvhilScenario **out);

/**
 * Sets a sweepable parameter (`pv_generation_fraction`, `load_scale` or
 * `line_length_factor`). The scenario is left unchanged when the new value
 * fails validation.
 *
 * # Safety
 * `scenario` must be a live handle and `name` a NUL-terminated string.
 */
enum PvhilStatus pvhil_scenario_set_param(struct PvhilScenario *scenario,
                                          const char *name,
                                          double value);

/**
 * # Safety
 * `scenario` must be null or a handle not yet freed.
 */
void pvhil_scenario_free(struct PvhilScenario *scenario);

/**
 * Runs a scenario to completion and cross-checks its relay decisions.
 * Split-mode scenarios run the controller on a thread over an in-memory
 * link rather than spawning a process.
 *
 * # Safety
 * `scenario` must be a live handle and `out` valid writable storage.
 */
enum PvhilStatus pvhil_run(const struct PvhilScenario *scenario, struct PvhilRun **out);

/**
 * # Safety
 * `run` must be null or a handle not yet freed.
 */
void pvhil_run_free(struct PvhilRun *run);

/**
 * Number of recorded steps, or 0 for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t pvhil_run_len(const struct PvhilRun *run);

/**
 * Largest |RoCoF| seen at a measurement point (0 start, 1 middle, 2 end).
 *
 * # Safety
 * `run` must be a live handle and `out` valid writable storage.
 */
enum PvhilStatus pvhil_run_max_rocof(const struct PvhilRun *run, uint32_t point, double *out);

/**
 * Whether the relay at a measurement point tripped, and when (NaN if not).
 *
 * # Safety
 * `run` must be a live handle; `tripped` and `trip_time` valid writable
 * storage or null.
 */
enum PvhilStatus pvhil_run_trip(const struct PvhilRun *run,
                                uint32_t point,
                                bool *tripped,
                                double *trip_time);

/**
 * Time of the first return to normal inverter operation (NaN if none).
 *
 * # Safety
 * `run` must be a live handle and `out` valid writable storage.
 */
enum PvhilStatus pvhil_run_recovery_time(const struct PvhilRun *run, double *out);

/**
 * Copies up to `len` samples of a series into `buf` and stores the full
 * series length in `written`. `series` is a [`PvhilSeries`] value; `point`
 * is ignored for the time axis.
 *
 * # Safety
 * `run` must be a live handle, `buf` null or `len` writable doubles, and
 * `written` null or valid writable storage.
 */
enum PvhilStatus pvhil_run_series(const struct PvhilRun *run,
                                  uint32_t series,
                                  uint32_t point,
                                  double *buf,
                                  size_t len,
                                  size_t *written);

/**
 * Writes the CSV time series, JSON summary and scenario echo to `dir`.
 *
 * # Safety
 * `run` must be a live handle and `dir` a NUL-terminated string.
 */
enum PvhilStatus pvhil_run_write(const struct PvhilRun *run, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PVHIL_H */
