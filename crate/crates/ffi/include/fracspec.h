#ifndef FRACSPEC_H
#define FRACSPEC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  FS_STATUS_OK = 0,
  FS_STATUS_INVALID_PARAMETER = 1,
  FS_STATUS_INVALID_GRID = 2,
  FS_STATUS_DEGENERATE_INPUT = 3,
  FS_STATUS_INVALID_INPUT = 4,
  FS_STATUS_UNSUPPORTED = 5,
  FS_STATUS_NUMERICAL_FAILURE = 6,
  FS_STATUS_NULL_POINTER = 7,
  FS_STATUS_PANIC = 8,
} FsStatus;

typedef enum {
  FS_KERNEL_MODE_MIDPOINT = 0,
  FS_KERNEL_MODE_EXACT_CELL_PAIR = 1,
} FsKernelMode;

typedef enum {
  FS_DIRECTION_MIN = 0,
  FS_DIRECTION_MAX = 1,
} FsDirection;

/**
 * Opaque assembled problem: grid, exponents and kernel.
 */
typedef struct FsProblem FsProblem;

typedef struct {
  double tol_res;
  double tol_lambda;
  size_t max_iters;
  double step0;
  double armijo_c;
  double backtrack;
  uint64_t seed;
} FsSolverConfig;

typedef struct {
  double tol_lambda;
  double tol_v;
  double tol_fp;
  size_t max_iters;
  /**
   * Nonpositive selects the automatic initial ascent step.
   */
  double ascent_step0;
  double tol_mono;
} FsOuterConfig;

typedef struct {
  double lambda;
  double residual;
  size_t iterations;
  bool converged;
} FsEigenResult;

typedef struct {
  double lambda;
  double optimality_residual;
  size_t iterations;
  bool converged;
} FsOptResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call into this library on the same thread.
 */
const char *fs_last_error_message(void);

FsSolverConfig fs_solver_config_default(void);

FsOuterConfig fs_outer_config_default(void);

/**
 * Assembles the kernel for `N` cells on `(a, b)`.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
FsStatus fs_problem_new(double a,
                        double b,
                        size_t n,
                        double s,
                        double p,
                        double q,
                        FsKernelMode mode,
                        FsProblem **out);

/**
 * # Safety
 * `problem` must come from `fs_problem_new` and not be used afterwards.
 */
void fs_problem_free(FsProblem *problem);

/**
 * Number of cells, 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t fs_problem_len(const FsProblem *problem);

/**
 * First eigenpair at `potential` (null means `V = 0`). `u_out`, if not
 * null, receives `N` values.
 *
 * # Safety
 * Non-null pointers must reference `potential_len` readable / `N` writable
 * doubles and one writable result.
 */
FsStatus fs_solve_eigen(const FsProblem *problem,
                        const FsSolverConfig *cfg,
                        const double *potential,
                        size_t potential_len,
                        double *u_out,
                        FsEigenResult *result);

/**
 * Dense `p = 2` reference eigenpair.
 *
 * # Safety
 * As for `fs_solve_eigen`; `lambda_out` must be writable.
 */
FsStatus fs_dense_oracle(const FsProblem *problem,
                         const double *potential,
                         size_t potential_len,
                         double *u_out,
                         double *lambda_out);

/**
 * Minimizes or maximizes `λ` over `‖V‖_q <= radius`. `init` may be null.
 *
 * # Safety
 * Non-null arrays hold `N` doubles; configs and `result` are valid.
 */
FsStatus fs_optimize_ball(const FsProblem *problem,
                          const FsSolverConfig *cfg,
                          const FsOuterConfig *outer,
                          FsDirection direction,
                          double q,
                          double radius,
                          const double *init,
                          size_t init_len,
                          double *v_out,
                          double *u_out,
                          FsOptResult *result);

/**
 * Minimizes `λ` over the permutations of `v0`.
 *
 * # Safety
 * `v0` holds `v0_len` doubles; outputs as for `fs_optimize_ball`.
 */
FsStatus fs_minimize_rearrangement(const FsProblem *problem,
                                   const FsSolverConfig *cfg,
                                   const FsOuterConfig *outer,
                                   const double *v0,
                                   size_t v0_len,
                                   double *v_out,
                                   double *u_out,
                                   FsOptResult *result);

/**
 * Picone term for cells `i`, `j` (0-based) of `u >= 0`, `v > 0`.
 *
 * # Safety
 * `u` and `v` hold `len` doubles; `out` is writable.
 */
FsStatus fs_picone_term(const double *u,
                        const double *v,
                        size_t len,
                        size_t i,
                        size_t j,
                        double p,
                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRACSPEC_H */
