#ifndef IECODE_H
#define IECODE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IecStatus {
  IEC_STATUS_OK = 0,
  IEC_STATUS_NULL_ARGUMENT = 1,
  IEC_STATUS_INVALID_UTF8 = 2,
  /**
   * Schema text did not parse or broke a schema rule.
   */
  IEC_STATUS_SCHEMA_ERROR = 3,
  /**
   * A JSON argument did not parse or had the wrong shape.
   */
  IEC_STATUS_INVALID_JSON = 4,
  /**
   * The document could not be rendered (invalid gold, bad characters).
   */
  IEC_STATUS_RENDER_ERROR = 5,
  /**
   * Unknown policy name or a policy the task kind does not allow.
   */
  IEC_STATUS_INVALID_ARGUMENT = 6,
  IEC_STATUS_PANIC = 99,
} IecStatus;

/**
 * Opaque, immutable task schema.
 */
typedef struct IecSchema IecSchema;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a TOML schema and checks it. On success `*out` owns a new handle.
 *
 * # Safety
 * `toml` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum IecStatus iec_schema_from_toml(const char *toml, struct IecSchema **out);

/**
 * Releases a schema handle. Null is a no-op.
 *
 * # Safety
 * `schema` must come from [`iec_schema_from_toml`] and not be used again.
 */
void iec_schema_free(struct IecSchema *schema);

/**
 * Number of labels in the schema, or 0 for a null handle.
 *
 * # Safety
 * `schema` must be null or a live handle.
 */
size_t iec_schema_label_count(const struct IecSchema *schema);

/**
 * Renders a document (`{doc_id, text, annotations}`) into a compiled example
 * (`{doc_id, prompt, result, split_offset, trace}`). `options_json` may be
 * null for the defaults.
 *
 * # Safety
 * Pointers must be valid; string arguments NUL-terminated.
 */
enum IecStatus iec_render_prompt(const struct IecSchema *schema,
                                 const char *document_json,
                                 const char *options_json,
                                 char **out);

/**
 * Parses model output into a parse outcome (`{status, annotations,
 * hallucinations, ...}`). Unparseable text is a successful call whose
 * outcome has `status = "unparseable"`.
 *
 * # Safety
 * Pointers must be valid; `text` NUL-terminated.
 */
enum IecStatus iec_parse_result(const struct IecSchema *schema, const char *text, char **out);

/**
 * Scores two JSON arrays of annotations under `policy` (`exact`,
 * `category` or `partial`) and returns `{per_label, micro}`.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum IecStatus iec_score(const struct IecSchema *schema,
                         const char *gold_json,
                         const char *pred_json,
                         const char *policy,
                         char **out);

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread; do not
 * free it.
 */
const char *iec_last_error(void);

/**
 * Frees a string returned through an out-pointer. Null is a no-op.
 *
 * # Safety
 * `s` must come from this library and not be used again.
 */
void iec_string_free(char *s);

/**
 * Library version, static storage.
 */
const char *iec_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IECODE_H */
