#ifndef SELFCORR_H
#define SELFCORR_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ScStatus {
  SC_STATUS_OK = 0,
  SC_STATUS_NULL_POINTER = 1,
  SC_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad arguments, config or files.
   */
  SC_STATUS_CONFIG = 3,
  /**
   * A remote backend or scorer failed.
   */
  SC_STATUS_BACKEND = 4,
  /**
   * An invariant broke or a panic was caught.
   */
  SC_STATUS_INTERNAL = 5,
} ScStatus;

/**
 * A trained corrector loaded from a run directory.
 */
typedef struct ScCorrector ScCorrector;

/**
 * A datapool loaded from `datapool.jsonl`.
 */
typedef struct ScDatapool ScDatapool;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until
 * the next call into this library on the same thread.
 */
const char *sc_last_error_message(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a pointer returned by this library, freed once.
 */
void sc_string_free(char *s);

/**
 * Tokens of `input`, separated by single spaces.
 *
 * # Safety
 * `input` must be a NUL-terminated string; `out_tokens` must be writable.
 */
enum ScStatus sc_tokenize(const char *input, char **out_tokens);

/**
 * 1 when `program` runs and prints `gold` first, else 0.
 *
 * # Safety
 * `program` must be a NUL-terminated string; `out_value` must be writable.
 */
enum ScStatus sc_program_value(const char *program, double gold, double *out_value);

/**
 * Fraction of the `n_constraints` constraints found in `output`.
 *
 * # Safety
 * `constraints` must point to `n_constraints` NUL-terminated strings
 * (it may be NULL when `n_constraints` is 0); `output` must be a
 * NUL-terminated string; `out_value` must be writable.
 */
enum ScStatus sc_coverage_value(const char *const *constraints,
                                size_t n_constraints,
                                const char *output,
                                double *out_value);

/**
 * Token-level similarity in [0, 1].
 *
 * # Safety
 * `a` and `b` must be NUL-terminated strings; `out_value` must be writable.
 */
enum ScStatus sc_similarity(const char *a, const char *b, double *out_value);

/**
 * Unnormalized sampling weight of correcting `hypothesis` into
 * `correction`. The correction must score strictly higher.
 *
 * # Safety
 * `hypothesis` and `correction` must be NUL-terminated strings;
 * `out_weight` must be writable.
 */
enum ScStatus sc_pair_weight(const char *hypothesis,
                             double hypothesis_value,
                             const char *correction,
                             double correction_value,
                             double alpha,
                             double beta,
                             double *out_weight);

/**
 * Loads the corrector trained in `run_dir`.
 *
 * # Safety
 * `run_dir` must be a NUL-terminated string; `out_handle` must be writable.
 */
enum ScStatus sc_corrector_open(const char *run_dir, struct ScCorrector **out_handle);

/**
 * One greedy correction of `hypothesis` for `prompt`, with optional
 * `feedback` (NULL for none).
 *
 * # Safety
 * `handle` must come from [`sc_corrector_open`]; string arguments must be
 * NUL-terminated; `out_correction` must be writable.
 */
enum ScStatus sc_corrector_correct(const struct ScCorrector *handle,
                                   const char *prompt,
                                   const char *hypothesis,
                                   const char *feedback,
                                   char **out_correction);

/**
 * Draft-and-correct trajectory for a suite input id, as one JSON object.
 * `max_corrections < 0` keeps the run's setting.
 *
 * # Safety
 * `handle` must come from [`sc_corrector_open`]; `input_id` must be
 * NUL-terminated; `out_json` must be writable.
 */
enum ScStatus sc_corrector_infer(const struct ScCorrector *handle,
                                 const char *input_id,
                                 int64_t max_corrections,
                                 char **out_json);

/**
 * # Safety
 * `handle` must be NULL or come from [`sc_corrector_open`], freed once.
 */
void sc_corrector_free(struct ScCorrector *handle);

/**
 * Loads a datapool JSONL file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_handle` must be writable.
 */
enum ScStatus sc_datapool_open(const char *path, struct ScDatapool **out_handle);

/**
 * Number of distinct candidates.
 *
 * # Safety
 * `handle` must come from [`sc_datapool_open`]; `out_len` must be writable.
 */
enum ScStatus sc_datapool_len(const struct ScDatapool *handle, size_t *out_len);

/**
 * Number of value-improving pairs over all inputs.
 *
 * # Safety
 * `handle` must come from [`sc_datapool_open`]; `out_count` must be writable.
 */
enum ScStatus sc_datapool_pair_count(const struct ScDatapool *handle, size_t *out_count);

/**
 * # Safety
 * `handle` must be NULL or come from [`sc_datapool_open`], freed once.
 */
void sc_datapool_free(struct ScDatapool *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SELFCORR_H */
