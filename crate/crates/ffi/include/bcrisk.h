#ifndef BCRISK_H
#define BCRISK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum BcriskStatus {
  BCRISK_STATUS_OK = 0,
  BCRISK_STATUS_NULL_POINTER = 1,
  BCRISK_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed or out-of-range input.
   */
  BCRISK_STATUS_INVALID_INPUT = 3,
  /**
   * A numerical procedure failed.
   */
  BCRISK_STATUS_NUMERIC = 4,
  BCRISK_STATUS_IO = 5,
  /**
   * A bug inside the library; the message says where.
   */
  BCRISK_STATUS_PANIC = 6,
} BcriskStatus;

/**
 * Opaque assessment result.
 */
typedef struct BcriskAssessment BcriskAssessment;

/**
 * Opaque risk model.
 */
typedef struct BcriskModel BcriskModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success. The pointer
 * stays valid until the next call on the same thread.
 */
const char *bcrisk_last_error(void);

/**
 * Library version, static storage.
 */
const char *bcrisk_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` is null or came from this library and has not been freed.
 */
void bcrisk_string_free(char *s);

/**
 * Model with the built-in parameter tables.
 *
 * # Safety
 * `out` is a valid pointer to write the handle to.
 */
enum BcriskStatus bcrisk_model_new_default(struct BcriskModel **out);

/**
 * Model from a parameter directory; files that are absent use the built-ins.
 *
 * # Safety
 * `dir` is a NUL-terminated path; `out` is a valid pointer.
 */
enum BcriskStatus bcrisk_model_from_dir(const char *dir, struct BcriskModel **out);

/**
 * # Safety
 * `model` is null or a handle from this library that has not been freed.
 */
void bcrisk_model_free(struct BcriskModel *model);

/**
 * Combined parameter version string; free with [`bcrisk_string_free`].
 *
 * # Safety
 * `model` is a live handle; `out` is a valid pointer.
 */
enum BcriskStatus bcrisk_model_parameter_version(const struct BcriskModel *model, char **out);

/**
 * Full assessment for a JSON request `{"age", "horizons", "profile", "pedigree"}`.
 *
 * # Safety
 * `model` is a live handle, `request_json` a NUL-terminated string, `out` valid.
 */
enum BcriskStatus bcrisk_assess(const struct BcriskModel *model,
                                const char *request_json,
                                struct BcriskAssessment **out);

/**
 * # Safety
 * `a` is null or a handle from this library that has not been freed.
 */
void bcrisk_assessment_free(struct BcriskAssessment *a);

/**
 * Ten-year absolute risk, or NaN for a null handle.
 *
 * # Safety
 * `a` is null or a live handle.
 */
double bcrisk_assessment_ten_year_risk(const struct BcriskAssessment *a);

/**
 * Risk to age 85, or NaN for a null handle.
 *
 * # Safety
 * `a` is null or a live handle.
 */
double bcrisk_assessment_lifetime_risk(const struct BcriskAssessment *a);

/**
 * Applied relative hazard, or NaN for a null handle.
 *
 * # Safety
 * `a` is null or a live handle.
 */
double bcrisk_assessment_relative_hazard(const struct BcriskAssessment *a);

/**
 * Ten-year risk category: 0 `<2%`, 1 `2-3%`, 2 `3-5%`, 3 `5-8%`, 4 `>=8%`; -1 for null.
 *
 * # Safety
 * `a` is null or a live handle.
 */
int32_t bcrisk_assessment_category(const struct BcriskAssessment *a);

/**
 * The assessment as JSON, borrowed from the handle and valid until it is freed.
 *
 * # Safety
 * `a` is null or a live handle.
 */
const char *bcrisk_assessment_json(const struct BcriskAssessment *a);

/**
 * Absolute risk between ages `t0` and `t` for a risk-factor JSON (null: all unknown)
 * and no family information.
 *
 * # Safety
 * `model` is a live handle, `profile_json` null or NUL-terminated, `out` valid.
 */
enum BcriskStatus bcrisk_absolute_risk(const struct BcriskModel *model,
                                       const char *profile_json,
                                       double t0,
                                       double t,
                                       double *out);

/**
 * Cumulative incidence over `years` under constant cause-specific hazards.
 *
 * # Safety
 * `out` is a valid pointer.
 */
enum BcriskStatus bcrisk_constant_hazard_risk(double h1, double h2, double years, double *out);

/**
 * Calibration report JSON for a cohort CSV with its curves CSV. `options_json` may be
 * null for defaults. Free the result with [`bcrisk_string_free`].
 *
 * # Safety
 * String arguments are NUL-terminated (`options_json` may be null); `out` is valid.
 */
enum BcriskStatus bcrisk_calibrate_csv(const char *cohort_csv,
                                       const char *curves_csv,
                                       const char *options_json,
                                       char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BCRISK_H */
