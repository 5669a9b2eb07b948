#ifndef DSPDHG_H
#define DSPDHG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DspdhgReport {
  DSPDHG_REPORT_AVERAGE = 0,
  DSPDHG_REPORT_ITERATE = 1,
} DspdhgReport;

typedef enum DspdhgRestart {
  DSPDHG_RESTART_NONE = 0,
  DSPDHG_RESTART_ADAPTIVE = 1,
  DSPDHG_RESTART_FIXED = 2,
} DspdhgRestart;

typedef enum DspdhgStatus {
  DSPDHG_STATUS_OK = 0,
  DSPDHG_STATUS_NULL_POINTER = 1,
  DSPDHG_STATUS_INVALID_ARGUMENT = 2,
  DSPDHG_STATUS_CONFIG = 3,
  DSPDHG_STATUS_PARSE = 4,
  DSPDHG_STATUS_IO = 5,
  DSPDHG_STATUS_NUMERICAL = 6,
  /**
   * The run ended on its budget before reaching `target_relkkt`; the
   * result handle is still written.
   */
  DSPDHG_STATUS_BUDGET_EXHAUSTED = 7,
  DSPDHG_STATUS_PANIC = 8,
} DspdhgStatus;

typedef struct DspdhgProblem DspdhgProblem;

typedef struct DspdhgResult DspdhgResult;

/**
 * Run settings. Start from [`dspdhg_options_default`] and override fields.
 */
typedef struct DspdhgOptions {
  double p;
  double q;
  /**
   * nonzero selects certified step sizes
   */
  int32_t certified;
  uint64_t seed;
  double max_cost;
  /**
   * 0 means no iteration cap
   */
  uint64_t max_iterations;
  /**
   * values <= 0 disable the target
   */
  double target_relkkt;
  double log_every;
  enum DspdhgRestart restart;
  /**
   * epoch length for `DSPDHG_RESTART_FIXED`
   */
  uint64_t restart_k;
  /**
   * trigger factor for `DSPDHG_RESTART_ADAPTIVE`
   */
  double restart_factor;
  enum DspdhgReport report;
} DspdhgOptions;

typedef struct DspdhgRecord {
  double cost_units;
  uint64_t iteration;
  uint64_t epoch;
  double relkkt;
  /**
   * NaN when not available
   */
  double rel_error;
  /**
   * NaN when not available
   */
  double infeasibility;
  double wall_seconds;
  int32_t restart_flag;
} DspdhgRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into the library from the same thread.
 */
const char *dspdhg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dspdhg_version(void);

struct DspdhgOptions dspdhg_options_default(void);

/**
 * Loads a problem in the dspdhg text format.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DspdhgStatus dspdhg_problem_load(const char *path, struct DspdhgProblem **out);

/**
 * Builds the soft-margin SVM saddle problem from a LIBSVM file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DspdhgStatus dspdhg_problem_libsvm(const char *path, double c, struct DspdhgProblem **out);

/**
 * Builds the SVM problem from a dense row-major `n x m` feature matrix and
 * `n` labels in {-1, +1}.
 *
 * # Safety
 * `features` must hold `n * m` doubles, `labels` `n` doubles, and `out`
 * must be a valid pointer.
 */
enum DspdhgStatus dspdhg_problem_svm_dense(const double *features,
                                           const double *labels,
                                           size_t n,
                                           size_t m,
                                           double c,
                                           struct DspdhgProblem **out);

/**
 * Generates a synthetic MPC instance.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DspdhgStatus dspdhg_problem_gen_mpc(size_t nx,
                                         size_t nu,
                                         size_t horizon,
                                         uint64_t seed,
                                         struct DspdhgProblem **out);

/**
 * # Safety
 * `problem` must come from a `dspdhg_problem_*` constructor and not be freed.
 */
size_t dspdhg_problem_primal_dim(const struct DspdhgProblem *problem);

/**
 * # Safety
 * As [`dspdhg_problem_primal_dim`].
 */
size_t dspdhg_problem_dual_dim(const struct DspdhgProblem *problem);

/**
 * # Safety
 * `problem` must be null or a handle not yet freed.
 */
void dspdhg_problem_free(struct DspdhgProblem *problem);

/**
 * Runs the solver. With a target set and not reached, returns
 * `DSPDHG_STATUS_BUDGET_EXHAUSTED` and still writes `*out`.
 *
 * # Safety
 * `problem` must be a live handle, `options` null (defaults) or valid, and
 * `out` a valid pointer.
 */
enum DspdhgStatus dspdhg_solve(const struct DspdhgProblem *problem,
                               const struct DspdhgOptions *options,
                               struct DspdhgResult **out);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
double dspdhg_result_relkkt(const struct DspdhgResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
double dspdhg_result_cost_units(const struct DspdhgResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
uint64_t dspdhg_result_iterations(const struct DspdhgResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
uint64_t dspdhg_result_restarts(const struct DspdhgResult *result);

/**
 * # Safety
 * `result` must be null or a live handle.
 */
size_t dspdhg_result_num_records(const struct DspdhgResult *result);

/**
 * Copies log row `index` into `*out`.
 *
 * # Safety
 * `result` must be a live handle and `out` a valid pointer.
 */
enum DspdhgStatus dspdhg_result_record(const struct DspdhgResult *result,
                                       size_t index,
                                       struct DspdhgRecord *out);

/**
 * Copies the reported primal point (the point of the last log row); `len`
 * must equal the primal dimension.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum DspdhgStatus dspdhg_result_primal(const struct DspdhgResult *result, double *buf, size_t len);

/**
 * Copies the reported dual point; `len` must equal the dual dimension.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum DspdhgStatus dspdhg_result_dual(const struct DspdhgResult *result, double *buf, size_t len);

/**
 * # Safety
 * `result` must be null or a handle not yet freed.
 */
void dspdhg_result_free(struct DspdhgResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSPDHG_H */
