#ifndef IPSLAB_H
#define IPSLAB_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum IpsStatus {
  IPS_STATUS_OK = 0,
  IPS_STATUS_NULL_POINTER = 1,
  IPS_STATUS_INVALID_UTF8 = 2,
  IPS_STATUS_INVALID_CONFIG = 3,
  IPS_STATUS_DOMAIN = 4,
  IPS_STATUS_UNSUPPORTED = 5,
  IPS_STATUS_CONTRACT = 6,
  IPS_STATUS_REFUSED = 7,
  IPS_STATUS_IO = 8,
  IPS_STATUS_PANIC = 9,
} IpsStatus;

/**
 * Parsed experiment configuration.
 */
typedef struct IpsConfig IpsConfig;

/**
 * Finished experiment report.
 */
typedef struct IpsReport IpsReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ips_version(void);

/**
 * Message of the last failing call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ips_last_error(void);

/**
 * Parses a TOML configuration.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IpsStatus ips_config_parse(const char *toml, struct IpsConfig **out);

/**
 * Releases a configuration; null is ignored.
 *
 * # Safety
 * `config` must be null or come from [`ips_config_parse`], and not be
 * freed twice.
 */
void ips_config_free(struct IpsConfig *config);

/**
 * Overrides the master seed and replica count; a zero count keeps the
 * configured one.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum IpsStatus ips_config_override(struct IpsConfig *config, uint64_t seed, uint64_t reps);

/**
 * Writes the violations of `config` for `experiment` (null: subcommand
 * independent rules only) as a JSON array of strings into `out`.
 *
 * # Safety
 * `config` must be a live handle, `experiment` null or a NUL-terminated
 * string, and `out` a valid pointer.
 */
enum IpsStatus ips_config_violations(const struct IpsConfig *config,
                                     const char *experiment,
                                     char **out);

/**
 * Runs `experiment` ("duality", "mu", ...) and stores the report in `out`.
 *
 * # Safety
 * `config` must be a live handle, `experiment` a NUL-terminated string and
 * `out` a valid pointer.
 */
enum IpsStatus ips_run(const struct IpsConfig *config,
                       const char *experiment,
                       struct IpsReport **out);

/**
 * 1 when the report's acceptance check passed, 0 when it failed, -1 when
 * the experiment has none or `report` is null.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
int32_t ips_report_passed(const struct IpsReport *report);

/**
 * Writes the report as JSON into `out`; `canonical` zeroes the wall time.
 *
 * # Safety
 * `report` must be a live handle and `out` a valid pointer.
 */
enum IpsStatus ips_report_json(const struct IpsReport *report, bool canonical, char **out);

/**
 * Releases a report; null is ignored.
 *
 * # Safety
 * `report` must be null or come from [`ips_run`], and not be freed twice.
 */
void ips_report_free(struct IpsReport *report);

/**
 * Releases a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must be null or a string returned by this library, not freed twice.
 */
void ips_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IPSLAB_H */
