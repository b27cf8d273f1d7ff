#ifndef FINVAL_H
#define FINVAL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FvAnomalyKind {
  FV_ANOMALY_KIND_OUTLIER = 0,
  FV_ANOMALY_KIND_MISSING = 1,
} FvAnomalyKind;

typedef enum FvStatus {
  FV_STATUS_OK = 0,
  FV_STATUS_NULL_ARGUMENT = 1,
  FV_STATUS_INVALID_UTF8 = 2,
  FV_STATUS_INVALID_INPUT = 3,
  FV_STATUS_DETECT_FAILED = 4,
  FV_STATUS_PAYLOAD_FAILED = 5,
  FV_STATUS_VERDICT_FAILED = 6,
  FV_STATUS_OUT_OF_RANGE = 7,
  FV_STATUS_PANIC = 99,
} FvStatus;

/**
 * Result of a detection run.
 */
typedef struct FvAnomalies FvAnomalies;

/**
 * A loaded daily series with optional metadata.
 */
typedef struct FvSeries FvSeries;

/**
 * One flagged date. `value` and `z_score` are only meaningful when the
 * matching `has_*` flag is set.
 */
typedef struct FvAnomaly {
  int32_t year;
  uint32_t month;
  uint32_t day;
  enum FvAnomalyKind kind;
  bool has_value;
  double value;
  bool has_z_score;
  double z_score;
} FvAnomaly;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a `date,value` CSV (or JSON) series. `metadata_path` may be null;
 * payloads can only be built from series loaded with metadata.
 *
 * # Safety
 * Path arguments must be NUL-terminated strings; `out` must be writable.
 */
enum FvStatus fv_series_load(const char *series_path,
                             const char *metadata_path,
                             struct FvSeries **out);

/**
 * Number of observations, or 0 for a null handle.
 *
 * # Safety
 * `series` must be null or a live handle from [`fv_series_load`].
 */
size_t fv_series_len(const struct FvSeries *series);

/**
 * # Safety
 * `series` must be null or a handle from [`fv_series_load`] not yet freed.
 */
void fv_series_free(struct FvSeries *series);

/**
 * Z-score screen with the given threshold and minimum history; writes a new
 * anomaly list to `out`. `min_changes` of 0 selects the default.
 *
 * # Safety
 * `series` must be a live handle; `out` must be writable.
 */
enum FvStatus fv_detect(const struct FvSeries *series,
                        double z_threshold,
                        size_t min_changes,
                        struct FvAnomalies **out);

/**
 * # Safety
 * `anomalies` must be null or a live handle from [`fv_detect`].
 */
size_t fv_anomalies_len(const struct FvAnomalies *anomalies);

/**
 * Copies entry `index` (date order) into `out`.
 *
 * # Safety
 * `anomalies` must be a live handle; `out` must be writable.
 */
enum FvStatus fv_anomalies_get(const struct FvAnomalies *anomalies,
                               size_t index,
                               struct FvAnomaly *out);

/**
 * # Safety
 * `anomalies` must be null or a handle from [`fv_detect`] not yet freed.
 */
void fv_anomalies_free(struct FvAnomalies *anomalies);

/**
 * Builds the validation payload as JSON:
 * `{"data": {"<series id>": {"<date>": value or null}}, "metadata": {...}}`.
 *
 * # Safety
 * Handles must be live; `out_json` must be writable. Free the result with
 * [`fv_string_free`].
 */
enum FvStatus fv_payload_build(const struct FvSeries *series,
                               const struct FvAnomalies *anomalies,
                               char **out_json);

/**
 * Parses an expert reply for `question_count` questions. Writes JSON
 * `{"shape": "per_item" or "global", "entries": {"1": {"verdict": "Correct", ...}}}`.
 *
 * # Safety
 * `raw` must be a NUL-terminated string; `out_json` must be writable. Free
 * the result with [`fv_string_free`].
 */
enum FvStatus fv_parse_verdicts(const char *raw, size_t question_count, char **out_json);

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next `fv_*` call on the same thread.
 */
const char *fv_last_error_message(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void fv_string_free(char *s);

/**
 * Library version, static storage.
 */
const char *fv_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FINVAL_H */
