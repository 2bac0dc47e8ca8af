/* C interface to the pintkit parallel-in-time solver.
 * Generated from the Rust sources; do not edit by hand. */

#ifndef PINTKIT_H
#define PINTKIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Terminal condition of a completed run.
 */
typedef enum PintRunOutcome {
  /**
   * The run converged (possibly at the iteration ceiling).
   */
  PintRunConverged = 0,
  /**
   * The wall-clock budget expired first.
   */
  PintRunBudgetExhausted = 1,
  /**
   * A solver or correction failure stopped the run early.
   */
  PintRunAborted = 2,
} PintRunOutcome;

/**
 * Result of a library call.
 */
typedef enum PintStatusCode {
  /**
   * The call succeeded.
   */
  PintStatusOk = 0,
  /**
   * A required pointer argument was null.
   */
  PintStatusNullArgument = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  PintStatusInvalidUtf8 = 2,
  /**
   * The configuration failed to parse or validate.
   */
  PintStatusConfig = 3,
  /**
   * The run could not be started.
   */
  PintStatusRunFailed = 4,
  /**
   * An internal invariant failed; the library state is still consistent.
   */
  PintStatusPanic = 5,
} PintStatusCode;

/**
 * Opaque parsed-and-validated run configuration.
 */
typedef struct PintConfigHandle PintConfigHandle;

/**
 * Opaque run report.
 */
typedef struct PintReportHandle PintReportHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; do not free.
 */
const char *pintkit_version(void);

/**
 * Parses a TOML run configuration. On success writes a new handle to `out`;
 * the caller owns it and must release it with `pintkit_config_free`.
 *
 * # Safety
 * `text` must point to a NUL-terminated string and `out` must be a valid
 * pointer.
 */
enum PintStatusCode pintkit_config_from_toml(const char *text, struct PintConfigHandle **out);

/**
 * Releases a configuration handle. Null is ignored.
 *
 * # Safety
 * `config` must be a handle returned by this library, released once.
 */
void pintkit_config_free(struct PintConfigHandle *config);

/**
 * Executes a run. On success writes a new report handle to `out`; the
 * caller owns it and must release it with `pintkit_report_free`. Runtime
 * failures (solver blow-up) still return `PINT_STATUS_OK` with an aborted
 * report; inspect `pintkit_report_outcome`.
 *
 * # Safety
 * `config` must be a valid configuration handle and `out` a valid pointer.
 */
enum PintStatusCode pintkit_run(const struct PintConfigHandle *config,
                                struct PintReportHandle **out);

/**
 * Releases a report handle. Null is ignored.
 *
 * # Safety
 * `report` must be a handle returned by this library, released once.
 */
void pintkit_report_free(struct PintReportHandle *report);

/**
 * Terminal condition of the run. A null handle reads as aborted.
 *
 * # Safety
 * `report` must be a valid report handle or null.
 */
enum PintRunOutcome pintkit_report_outcome(const struct PintReportHandle *report);

/**
 * Number of completed outer iterations; 0 for a null handle.
 *
 * # Safety
 * `report` must be a valid report handle or null.
 */
uint32_t pintkit_report_iterations(const struct PintReportHandle *report);

/**
 * Serializes the full report to JSON. The caller owns the returned string
 * and must release it with `pintkit_string_free`.
 *
 * # Safety
 * `report` must be a valid report handle and `out` a valid pointer.
 */
enum PintStatusCode pintkit_report_to_json(const struct PintReportHandle *report, char **out);

/**
 * Copies the most recent error message on this thread, or null if the last
 * call succeeded. The caller owns the returned string and must release it
 * with `pintkit_string_free`.
 */
char *pintkit_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `text` must be a string returned by this library, released once.
 */
void pintkit_string_free(char *text);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PINTKIT_H */
