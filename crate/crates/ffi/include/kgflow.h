#ifndef KGFLOW_H
#define KGFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a fallible call.
 */
typedef enum KgfStatus {
  KGF_STATUS_OK = 0,
  KGF_STATUS_NULL_ARGUMENT = 1,
  KGF_STATUS_INVALID_UTF8 = 2,
  KGF_STATUS_PARSE_ERROR = 3,
  KGF_STATUS_REGISTRY_ERROR = 4,
  KGF_STATUS_VERIFY_FAILED = 5,
  KGF_STATUS_EXEC_ERROR = 6,
  KGF_STATUS_EXTRACTION_FAILED = 7,
  KGF_STATUS_INVALID_ARGUMENT = 8,
  KGF_STATUS_PANIC = 9,
} KgfStatus;

/**
 * Execution mode for [`kgf_execute`].
 */
typedef enum KgfMode {
  KGF_MODE_LEARN = 0,
  KGF_MODE_THINK = 1,
} KgfMode;

/**
 * A parsed plan.
 */
typedef struct KgfPlan KgfPlan;

/**
 * A tool registry.
 */
typedef struct KgfRegistry KgfRegistry;

/**
 * A verification report.
 */
typedef struct KgfReport KgfReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call on the same thread; do not free.
 */
const char *kgf_last_error(void);

/**
 * Library version as a static string.
 */
const char *kgf_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void kgf_string_free(char *s);

/**
 * Parses a YAML plan into `*out`.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum KgfStatus kgf_plan_parse_yaml(const char *text, struct KgfPlan **out);

/**
 * Parses a planner JSON plan into `*out`.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum KgfStatus kgf_plan_parse_json(const char *text, struct KgfPlan **out);

/**
 * Writes the plan as YAML into `*out`.
 *
 * # Safety
 * `plan` must be a live handle; `out` must be writable.
 */
enum KgfStatus kgf_plan_to_yaml(const struct KgfPlan *plan, char **out);

/**
 * # Safety
 * `plan` must be null or a live handle from this library.
 */
void kgf_plan_free(struct KgfPlan *plan);

/**
 * The built-in tool registry.
 */
struct KgfRegistry *kgf_registry_builtin(void);

/**
 * Loads a registry from dictionary JSON into `*out`.
 *
 * # Safety
 * `dictionary` must be a NUL-terminated string; `out` must be writable.
 */
enum KgfStatus kgf_registry_load(const char *dictionary, struct KgfRegistry **out);

/**
 * # Safety
 * `registry` must be null or a live handle from this library.
 */
void kgf_registry_free(struct KgfRegistry *registry);

/**
 * Verifies `plan` against `registry`. Returns `Ok` whether or not the plan
 * passes; query the report.
 *
 * # Safety
 * `plan` and `registry` must be live handles; `out` must be writable.
 */
enum KgfStatus kgf_verify(const struct KgfPlan *plan,
                          const struct KgfRegistry *registry,
                          struct KgfReport **out);

/**
 * 1 when the report has no errors, 0 otherwise (also for null).
 *
 * # Safety
 * `report` must be null or a live handle.
 */
int32_t kgf_report_passed(const struct KgfReport *report);

/**
 * Number of error diagnostics, or -1 for null.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
int64_t kgf_report_error_count(const struct KgfReport *report);

/**
 * The text report ending in `Checks passed: True|False`.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum KgfStatus kgf_report_render(const struct KgfReport *report, char **out);

/**
 * The diagnostics as a JSON array.
 *
 * # Safety
 * `report` must be a live handle; `out` must be writable.
 */
enum KgfStatus kgf_report_to_json(const struct KgfReport *report, char **out);

/**
 * # Safety
 * `report` must be null or a live handle from this library.
 */
void kgf_report_free(struct KgfReport *report);

/**
 * Executes `plan` in `mode`, writing artifacts under `out_dir`.
 * `bindings_path` may be null when the plan has no placeholders. On success
 * `*summary` holds a JSON object with the artifact paths and mean Dice.
 *
 * # Safety
 * Handles must be live, strings NUL-terminated, `summary` writable.
 */
enum KgfStatus kgf_execute(const struct KgfPlan *plan,
                           const struct KgfRegistry *registry,
                           const char *bindings_path,
                           enum KgfMode mode,
                           const char *out_dir,
                           char **summary);

/**
 * Extracts the plan JSON from a model completion into `*out`.
 *
 * # Safety
 * `completion` must be NUL-terminated; `out` must be writable.
 */
enum KgfStatus kgf_extract_json(const char *completion, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KGFLOW_H */
