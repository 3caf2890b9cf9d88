#ifndef PULLTRACK_H
#define PULLTRACK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PtStatus {
  PT_STATUS_OK = 0,
  PT_STATUS_NULL_POINTER = 1,
  PT_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The model has no solved policy yet.
   */
  PT_STATUS_NOT_SOLVED = 3,
  /**
   * The belief graph or MDP exceeds a size limit.
   */
  PT_STATUS_TOO_LARGE = 4,
  /**
   * The solver stopped before reaching its span threshold.
   */
  PT_STATUS_NOT_CONVERGED = 5,
  PT_STATUS_INTERNAL = 6,
  PT_STATUS_PANIC = 7,
} PtStatus;

typedef enum PtDistortion {
  PT_DISTORTION_INDICATOR = 0,
  PT_DISTORTION_ABSOLUTE = 1,
  PT_DISTORTION_SQUARED = 2,
} PtDistortion;

typedef enum PtPolicy {
  PT_POLICY_POMDP = 0,
  PT_POLICY_MAF = 1,
  PT_POLICY_IDLE = 2,
  PT_POLICY_ROUND_ROBIN = 3,
  PT_POLICY_RANDOM = 4,
} PtPolicy;

/**
 * Opaque model: a belief graph plus, once solved, its policy table.
 */
typedef struct PtModel PtModel;

typedef struct PtModelParams {
  size_t k;
  double p;
  double theta;
  double lambda;
  double p_s;
  double gamma;
  /**
   * Truncation depth of the belief graph.
   */
  size_t depth;
  size_t update_lag;
  enum PtDistortion distortion;
} PtModelParams;

typedef struct PtSolverParams {
  double epsilon;
  size_t max_iterations;
  double aperiodicity;
} PtSolverParams;

typedef struct PtSolveResult {
  double rho;
  size_t iterations;
  bool converged;
} PtSolveResult;

typedef struct PtSimResult {
  double mean_cost;
  double stderr_cost;
  double mean_distortion;
  double stderr_distortion;
  double mean_transmissions;
  size_t runs;
} PtSimResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last error on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *pt_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pt_version(void);

/**
 * Fills `out` with the default parameters (K=2, p=0.8, theta=0.5,
 * lambda=0.4, p_s=0.8, gamma=0.05, depth 6, lag 1, absolute distortion).
 *
 * # Safety
 * `out` must be null or point to writable memory for one `PtModelParams`.
 */
enum PtStatus pt_default_params(struct PtModelParams *out);

/**
 * Solver defaults: epsilon 1e-7, 100000 iterations, aperiodicity 1.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `PtSolverParams`.
 */
enum PtStatus pt_default_solver(struct PtSolverParams *out);

/**
 * Builds the belief graph for `params` and stores a new handle in `*out`.
 *
 * # Safety
 * `params` must point to a valid `PtModelParams`; `out` to writable storage
 * for one pointer.
 */
enum PtStatus pt_model_new(const struct PtModelParams *params, struct PtModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from `pt_model_new` not yet freed.
 */
void pt_model_free(struct PtModel *model);

/**
 * Number of nodes in the model's belief graph.
 *
 * # Safety
 * `model` must be a live handle; `out` writable.
 */
enum PtStatus pt_model_node_count(const struct PtModel *model, size_t *out);

/**
 * Solves the belief MDP with relative value iteration. `solver` may be null
 * for defaults. Returns `NotConverged` (with `out` filled and the table kept)
 * when the iteration budget runs out.
 *
 * # Safety
 * `model` must be a live handle; `solver` null or valid; `out` null or writable.
 */
enum PtStatus pt_model_solve(struct PtModel *model,
                             const struct PtSolverParams *solver,
                             struct PtSolveResult *out);

/**
 * Action of the solved policy for a joint belief of length `2^K`
 * (0 = idle, k = request source k).
 *
 * # Safety
 * `model` must be a live handle; `belief` must point to `len` doubles;
 * `out` writable.
 */
enum PtStatus pt_model_action(const struct PtModel *model,
                              const double *belief,
                              size_t len,
                              size_t *out);

/**
 * Simulates `policy` on the model's parameters for each seed and averages.
 * The POMDP policy requires a solved model.
 *
 * # Safety
 * `model` must be a live handle; `seeds` must point to `n_seeds` values;
 * `out` writable.
 */
enum PtStatus pt_simulate(const struct PtModel *model,
                          enum PtPolicy policy,
                          uint64_t horizon,
                          const uint64_t *seeds,
                          size_t n_seeds,
                          struct PtSimResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PULLTRACK_H */
