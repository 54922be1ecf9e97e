#ifndef SPLITMONO_H
#define SPLITMONO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum SmStatus {
  SM_STATUS_OK = 0,
  SM_STATUS_NULL_POINTER = 1,
  SM_STATUS_INVALID_ARGUMENT = 2,
  SM_STATUS_DIMENSION = 3,
  SM_STATUS_CONDITION = 4,
  SM_STATUS_CONFIG = 5,
  SM_STATUS_LINE_SEARCH = 6,
  SM_STATUS_NON_FINITE = 7,
  SM_STATUS_NUMERICAL = 8,
  SM_STATUS_BUFFER_TOO_SMALL = 9,
  SM_STATUS_PANIC = 10,
  /**
   * An experiment ran but some rows ended in error.
   */
  SM_STATUS_CELL_ERRORS = 11,
} SmStatus;

typedef enum SmSolver {
  SM_SOLVER_FBHF = 0,
  SM_SOLVER_TSENG = 1,
  SM_SOLVER_FBHF_LINE_SEARCH = 2,
  SM_SOLVER_TSENG_LINE_SEARCH = 3,
  SM_SOLVER_CONDAT_VU = 4,
} SmSolver;

typedef enum SmTermination {
  SM_TERMINATION_TOLERANCE = 0,
  SM_TERMINATION_MAX_ITERATIONS = 1,
  SM_TERMINATION_ERROR = 2,
} SmTermination;

/**
 * A generated constrained problem.
 */
typedef struct SmProblem SmProblem;

/**
 * The outcome of one solve.
 */
typedef struct SmReport SmReport;

/**
 * Solver settings. Start from [`sm_solve_options_default`].
 */
typedef struct SmSolveOptions {
  uint64_t max_iterations;
  double tolerance;
  /**
   * Step fraction for the constant-step solvers.
   */
  double delta;
  double ls_epsilon;
  double ls_sigma;
  double ls_theta;
  uint64_t ls_max_backtracks;
  /**
   * Dual step scale for Condat-Vu.
   */
  double sigma_bar;
  /**
   * Nonzero skips step-size admissibility checks.
   */
  uint8_t unsafe_stepsize;
} SmSolveOptions;

typedef struct SmCounters {
  uint64_t resolvent;
  uint64_t b1;
  uint64_t b2;
  uint64_t projections;
  uint64_t backtracks;
} SmCounters;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`) and returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
uintptr_t sm_last_error(char *buf, uintptr_t len);

/**
 * Largest admissible forward-backward-half-forward step for cocoercivity
 * modulus `beta` (infinite when `beta <= 0`) and Lipschitz constant `lipschitz`.
 *
 * # Safety
 * `out` must be null or valid for a write.
 */
enum SmStatus sm_chi(double beta, double lipschitz, double *out);

struct SmSolveOptions sm_solve_options_default(void);

/**
 * Box-constrained least squares with `p` random affine inequalities in
 * dimension `n`.
 *
 * # Safety
 * `out` must be null or valid for a write.
 */
enum SmStatus sm_problem_lin_ineq(uintptr_t n, uintptr_t p, uint64_t seed, struct SmProblem **out);

/**
 * Box-constrained least squares with the negative-entropy constraint
 * `sum x log x <= r_fraction * n`.
 *
 * # Safety
 * `out` must be null or valid for a write.
 */
enum SmStatus sm_problem_entropy(uintptr_t n,
                                 double r_fraction,
                                 uint64_t seed,
                                 struct SmProblem **out);

/**
 * Primal dimension, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
uintptr_t sm_problem_dim(const struct SmProblem *p);

/**
 * Number of inequality constraints, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
uintptr_t sm_problem_num_constraints(const struct SmProblem *p);

/**
 * # Safety
 * `p` must be null or a handle not yet freed.
 */
void sm_problem_free(struct SmProblem *p);

/**
 * Solves `problem` and stores the outcome in `*out`. A run that stops
 * because of a numerical failure mid-way still yields a report whose
 * termination is `Error`; invalid settings return a nonzero status instead.
 *
 * # Safety
 * `problem` must be a live handle, `options` null or valid, `out` valid for a write.
 */
enum SmStatus sm_problem_solve(const struct SmProblem *problem,
                               enum SmSolver solver,
                               const struct SmSolveOptions *options,
                               struct SmReport **out);

/**
 * # Safety
 * `r` must be a live handle.
 */
uint64_t sm_report_iterations(const struct SmReport *r);

/**
 * # Safety
 * `r` must be a live handle.
 */
enum SmTermination sm_report_termination(const struct SmReport *r);

/**
 * Objective at the primal part of the final iterate (NaN for a null handle).
 *
 * # Safety
 * `r` must be a live handle.
 */
double sm_report_objective(const struct SmReport *r);

/**
 * Largest constraint value at the final primal iterate.
 *
 * # Safety
 * `r` must be a live handle.
 */
double sm_report_max_constraint(const struct SmReport *r);

/**
 * # Safety
 * `r` must be a live handle and `out` valid for a write.
 */
enum SmStatus sm_report_counters(const struct SmReport *r, struct SmCounters *out);

/**
 * Copies the primal solution into `buf`. `*needed` receives its length
 * either way; a short buffer yields `BufferTooSmall` and nothing is copied.
 *
 * # Safety
 * `buf` must point to `len` writable doubles (or be null with `len == 0`);
 * `needed` must be null or valid for a write.
 */
enum SmStatus sm_report_solution(const struct SmReport *r,
                                 double *buf,
                                 uintptr_t len,
                                 uintptr_t *needed);

/**
 * # Safety
 * `r` must be null or a handle not yet freed.
 */
void sm_report_free(struct SmReport *r);

/**
 * Runs an experiment described by configuration text and writes
 * `report.csv` and `summary.md` under `out_dir`. `*failed_rows` (optional)
 * receives the number of rows that ended in error; when it is nonzero the
 * status is `CellErrors`.
 *
 * # Safety
 * `config` and `out_dir` must be NUL-terminated strings; `failed_rows` null or valid.
 */
enum SmStatus sm_run_experiment(const char *config,
                                const char *out_dir,
                                uintptr_t threads,
                                uint8_t unsafe_stepsize,
                                uintptr_t *failed_rows);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPLITMONO_H */
