#ifndef DDSTAB_H
#define DDSTAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DdstabStatus {
  DDSTAB_STATUS_OK = 0,
  DDSTAB_STATUS_NULL_POINTER = 1,
  DDSTAB_STATUS_INVALID_UTF8 = 2,
  DDSTAB_STATUS_INVALID_ARGUMENT = 3,
  DDSTAB_STATUS_DIMENSION = 4,
  DDSTAB_STATUS_NUMERICAL = 5,
  DDSTAB_STATUS_ALIGNMENT = 6,
  DDSTAB_STATUS_IDENTIFICATION = 7,
  DDSTAB_STATUS_SOLVER_INCONSISTENCY = 8,
  DDSTAB_STATUS_BACKEND = 9,
  DDSTAB_STATUS_IO = 10,
  DDSTAB_STATUS_PARSE = 11,
  /**
   * The requested quantity does not exist (no gain, no certificate).
   */
  DDSTAB_STATUS_NOT_AVAILABLE = 12,
  DDSTAB_STATUS_BUFFER_TOO_SMALL = 13,
  DDSTAB_STATUS_PANIC = 14,
} DdstabStatus;

typedef enum DdstabBatchKind {
  DDSTAB_BATCH_KIND_STATE = 0,
  DDSTAB_BATCH_KIND_OUTPUT = 1,
} DdstabBatchKind;

/**
 * A loaded data batch.
 */
typedef struct DdstabBatch DdstabBatch;

/**
 * A finished design and its report.
 */
typedef struct DdstabDesign DdstabDesign;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *ddstab_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library on this thread.
 */
const char *ddstab_last_error_message(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ddstab_string_free(char *s);

/**
 * Load a batch directory (CSV matrices plus `batch.json`).
 *
 * # Safety
 * `dir` must be a valid C string; `out` a valid pointer.
 */
enum DdstabStatus ddstab_batch_read_dir(const char *dir, struct DdstabBatch **out);

/**
 * # Safety
 * `batch` must come from [`ddstab_batch_read_dir`] or be null.
 */
void ddstab_batch_free(struct DdstabBatch *batch);

/**
 * Kind and dimensions `n`, `m`, `N` of a batch.
 *
 * # Safety
 * All pointers must be valid.
 */
enum DdstabStatus ddstab_batch_info(const struct DdstabBatch *batch,
                                    enum DdstabBatchKind *kind,
                                    size_t *n,
                                    size_t *m,
                                    size_t *samples);

/**
 * Design from a loaded batch. `plant_json` (a plant spec, may be null)
 * enables certification. `delta <= 0` selects the default margin.
 *
 * # Safety
 * `batch` and `out` must be valid; `plant_json` null or a C string.
 */
enum DdstabStatus ddstab_design_from_batch(const struct DdstabBatch *batch,
                                           const char *plant_json,
                                           double delta,
                                           struct DdstabDesign **out);

/**
 * Run a full design from a JSON experiment config (simulated plant or
 * batch directory).
 *
 * # Safety
 * `config_json` must be a C string; `out` valid.
 */
enum DdstabStatus ddstab_design_from_config_json(const char *config_json,
                                                 struct DdstabDesign **out);

/**
 * # Safety
 * `design` must come from this library or be null.
 */
void ddstab_design_free(struct DdstabDesign *design);

/**
 * `1` if the LMI was solved, else `0`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum DdstabStatus ddstab_design_solved(const struct DdstabDesign *design, int *solved);

/**
 * `1` if the closed loop was certified Hurwitz against ground truth.
 *
 * # Safety
 * Pointers must be valid.
 */
enum DdstabStatus ddstab_design_certified(const struct DdstabDesign *design, int *certified);

/**
 * Spectral abscissa of the certified closed loop; `NotAvailable` without
 * ground truth or gain.
 *
 * # Safety
 * Pointers must be valid.
 */
enum DdstabStatus ddstab_design_abscissa(const struct DdstabDesign *design, double *abscissa);

/**
 * Shape of the gain `K`; `NotAvailable` if the LMI was infeasible.
 *
 * # Safety
 * Pointers must be valid.
 */
enum DdstabStatus ddstab_design_gain_shape(const struct DdstabDesign *design,
                                           size_t *rows,
                                           size_t *cols);

/**
 * Copy `K` row-major into `buf` of length `len`.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum DdstabStatus ddstab_design_gain(const struct DdstabDesign *design, double *buf, size_t len);

/**
 * Full report as JSON; free with [`ddstab_string_free`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum DdstabStatus ddstab_design_report_json(const struct DdstabDesign *design, char **out);

/**
 * Text summary; free with [`ddstab_string_free`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum DdstabStatus ddstab_design_summary(const struct DdstabDesign *design, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DDSTAB_H */
