#ifndef PISR_H
#define PISR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PisrStatus {
  PISR_STATUS_OK = 0,
  PISR_STATUS_NULL_POINTER = 1,
  PISR_STATUS_INVALID_UTF8 = 2,
  PISR_STATUS_INVALID_ARGUMENT = 3,
  PISR_STATUS_PARSE = 4,
  PISR_STATUS_IO = 5,
  PISR_STATUS_SEARCH = 6,
  PISR_STATUS_PANIC = 7,
} PisrStatus;

/**
 * A generated or loaded dataset.
 */
typedef struct PisrDataset PisrDataset;

/**
 * Variable names and units for parsing and rendering.
 */
typedef struct PisrSchema PisrSchema;

/**
 * The outcome of one search run.
 */
typedef struct PisrSearchResult PisrSearchResult;

/**
 * A validated expression tree.
 */
typedef struct PisrTree PisrTree;

/**
 * Parsed critic scores. `feedback` is not included; see
 * [`pisr_parse_verdict`].
 */
typedef struct PisrVerdict {
  double dim_corr;
  double simp;
  double sim;
  /**
   * Aggregate `1 - mean(dim_corr, simp, sim)`.
   */
  double c;
  bool clamped;
  bool extra_text;
} PisrVerdict;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *pisr_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void pisr_string_free(char *s);

/**
 * Library version as a static string.
 */
const char *pisr_version(void);

/**
 * Builds a schema from comma-separated variable names.
 *
 * # Safety
 * `names` must be a valid C string; `out` must be writable.
 */
enum PisrStatus pisr_schema_new(const char *names, struct PisrSchema **out);

/**
 * Schema (with units) of a built-in scenario: `drop_ball`, `shm` or `em_wave`.
 *
 * # Safety
 * `scenario` must be a valid C string; `out` must be writable.
 */
enum PisrStatus pisr_schema_for_scenario(const char *scenario, struct PisrSchema **out);

/**
 * Number of variables in the schema.
 *
 * # Safety
 * `schema` must be a live handle; `out` must be writable.
 */
enum PisrStatus pisr_schema_len(const struct PisrSchema *schema, size_t *out);

/**
 * # Safety
 * `schema` must be null or a live handle from this library.
 */
void pisr_schema_free(struct PisrSchema *schema);

/**
 * Parses an infix equation against `schema`.
 *
 * # Safety
 * Pointers must be valid; `out` must be writable.
 */
enum PisrStatus pisr_tree_parse(const char *text,
                                const struct PisrSchema *schema,
                                struct PisrTree **out);

/**
 * # Safety
 * `tree` must be null or a live handle from this library.
 */
void pisr_tree_free(struct PisrTree *tree);

/**
 * Fully parenthesized infix rendering; free with `pisr_string_free`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum PisrStatus pisr_tree_render(const struct PisrTree *tree,
                                 const struct PisrSchema *schema,
                                 char **out);

/**
 * Canonical key (commutative children sorted); free with `pisr_string_free`.
 *
 * # Safety
 * `tree` must be live; `out` must be writable.
 */
enum PisrStatus pisr_tree_canonical_key(const struct PisrTree *tree, char **out);

/**
 * Node count.
 *
 * # Safety
 * `tree` must be live; `out` must be writable.
 */
enum PisrStatus pisr_tree_size(const struct PisrTree *tree, size_t *out);

/**
 * Height, where a single leaf has height 0.
 *
 * # Safety
 * `tree` must be live; `out` must be writable.
 */
enum PisrStatus pisr_tree_height(const struct PisrTree *tree, size_t *out);

/**
 * Evaluates the tree on one row of `len` values. `degenerate` (nullable) is
 * set when the result is non-finite and was replaced by the sentinel.
 *
 * # Safety
 * `row` must point to `len` doubles; `out` must be writable.
 */
enum PisrStatus pisr_tree_evaluate(const struct PisrTree *tree,
                                   const double *row,
                                   size_t len,
                                   double *out,
                                   bool *degenerate);

/**
 * Structural distance between two trees.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum PisrStatus pisr_tree_distance(const struct PisrTree *a,
                                   const struct PisrTree *b,
                                   double alpha,
                                   bool normalize,
                                   double *out);

/**
 * Structural similarity `max(0, 1 - distance)`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum PisrStatus pisr_tree_score(const struct PisrTree *a,
                                const struct PisrTree *b,
                                double alpha,
                                bool normalize,
                                double *out);

/**
 * Extracts `[dim_corr, simp, sim, "feedback"]` from a critic reply.
 * `feedback` (nullable) receives the feedback string.
 *
 * # Safety
 * `raw` must be a valid C string; `out` must be writable.
 */
enum PisrStatus pisr_parse_verdict(const char *raw, struct PisrVerdict *out, char **feedback);

/**
 * Generates a scenario dataset. `noise_target` is `features`, `target`,
 * `both` or `none`.
 *
 * # Safety
 * Strings must be valid C strings; `out` must be writable.
 */
enum PisrStatus pisr_dataset_generate(const char *scenario,
                                      size_t n_samples,
                                      double noise_level,
                                      const char *noise_target,
                                      uint64_t seed,
                                      struct PisrDataset **out);

/**
 * Loads a dataset CSV together with its JSON sidecar.
 *
 * # Safety
 * `path` must be a valid C string; `out` must be writable.
 */
enum PisrStatus pisr_dataset_read(const char *path, struct PisrDataset **out);

/**
 * Writes the dataset CSV and its JSON sidecar.
 *
 * # Safety
 * `data` must be live; `path` must be a valid C string.
 */
enum PisrStatus pisr_dataset_write(const struct PisrDataset *data, const char *path);

/**
 * Number of rows.
 *
 * # Safety
 * `data` must be live; `out` must be writable.
 */
enum PisrStatus pisr_dataset_len(const struct PisrDataset *data, size_t *out);

/**
 * Measured SNR of the target column in dB; infinity when noiseless.
 *
 * # Safety
 * `data` must be live; `out` must be writable.
 */
enum PisrStatus pisr_dataset_target_snr_db(const struct PisrDataset *data, double *out);

/**
 * # Safety
 * `data` must be null or a live handle from this library.
 */
void pisr_dataset_free(struct PisrDataset *data);

/**
 * Runs one search. `config_json` (nullable) is an engine configuration
 * object whose missing fields take defaults. `critic` (nullable) is `null`
 * or `mock`; network critics are only available from the CLI.
 *
 * # Safety
 * `data` must be live; strings must be valid or null; `out` must be writable.
 */
enum PisrStatus pisr_search_run(const struct PisrDataset *data,
                                const char *config_json,
                                const char *critic,
                                struct PisrSearchResult **out);

/**
 * Best equation of a search; free with `pisr_string_free`.
 *
 * # Safety
 * `result` must be live; `out` must be writable.
 */
enum PisrStatus pisr_search_result_best_equation(const struct PisrSearchResult *result, char **out);

/**
 * Composite loss of the best equation.
 *
 * # Safety
 * `result` must be live; `out` must be writable.
 */
enum PisrStatus pisr_search_result_loss(const struct PisrSearchResult *result, double *out);

/**
 * Full result (equation, loss breakdown, trace, config) as JSON; free with
 * `pisr_string_free`.
 *
 * # Safety
 * `result` must be live; `out` must be writable.
 */
enum PisrStatus pisr_search_result_json(const struct PisrSearchResult *result, char **out);

/**
 * # Safety
 * `result` must be null or a live handle from this library.
 */
void pisr_search_result_free(struct PisrSearchResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PISR_H */
