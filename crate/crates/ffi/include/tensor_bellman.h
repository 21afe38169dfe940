#ifndef TENSOR_BELLMAN_H
#define TENSOR_BELLMAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TbStatus {
  TB_STATUS_OK = 0,
  TB_STATUS_INVALID_INPUT = 1,
  TB_STATUS_NUMERICAL = 4,
  TB_STATUS_NOT_STRONG_M = 5,
  TB_STATUS_NO_SOLUTION = 6,
  TB_STATUS_CHECK_FAILED = 7,
  TB_STATUS_NULL_POINTER = 8,
  TB_STATUS_BUFFER_TOO_SMALL = 9,
  TB_STATUS_PANIC = 10,
} TbStatus;

typedef enum TbVerdict {
  TB_VERDICT_STRONG_M = 0,
  TB_VERDICT_NOT_STRONG_M = 1,
  TB_VERDICT_UNDECIDABLE = 2,
} TbVerdict;

typedef enum TbMethod {
  TB_METHOD_NEWTON = 0,
  TB_METHOD_FIXED_POINT = 1,
} TbMethod;

typedef enum TbScheme {
  TB_SCHEME_OD = 0,
  TB_SCHEME_DO = 1,
} TbScheme;

/*
 Opaque policy problem under construction.
 */
typedef struct TbProblem TbProblem;

/*
 Opaque sparse tensor.
 */
typedef struct TbTensor TbTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or NULL. Valid until the
 next failing call on the same thread.
 */
const char *tb_last_error_message(void);

/*
 Builds a tensor from `nnz` entries. `indices` holds `nnz * order` 0-based
 indices, row-major by entry.

 # Safety
 `indices` and `values` must point to arrays of the stated lengths and
 `out` must be a valid pointer.
 */
enum TbStatus tb_tensor_new(size_t order,
                            size_t dim,
                            size_t nnz,
                            const size_t *indices,
                            const double *values,
                            struct TbTensor **out);

/*
 Reads a tensor file.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TbStatus tb_tensor_read(const char *path, struct TbTensor **out);

/*
 # Safety
 `t` must come from `tb_tensor_new`/`tb_tensor_read` and not be freed twice.
 */
void tb_tensor_free(struct TbTensor *t);

/*
 # Safety
 `t` must be a valid tensor handle or NULL.
 */
size_t tb_tensor_order(const struct TbTensor *t);

/*
 # Safety
 `t` must be a valid tensor handle or NULL.
 */
size_t tb_tensor_dim(const struct TbTensor *t);

/*
 # Safety
 `t` must be a valid tensor handle or NULL.
 */
size_t tb_tensor_nnz(const struct TbTensor *t);

/*
 `out = A x^{m-1}`; both buffers have length `n = dim`.

 # Safety
 `x` and `out` must point to `n` doubles.
 */
enum TbStatus tb_tensor_contract(const struct TbTensor *t, const double *x, size_t n, double *out);

/*
 Strong M-tensor decision. When the verdict is not-strong-M and
 `zero_eigvec` is non-NULL, the `dim` entries of a nonnegative `z` with
 `A z^{m-1} = 0` are written there.

 # Safety
 `verdict` must be valid; `zero_eigvec` NULL or `n >= dim` doubles.
 */
enum TbStatus tb_classify(const struct TbTensor *t,
                          enum TbVerdict *verdict,
                          double *zero_eigvec,
                          size_t n);

/*
 Positive solution of `A x^{m-1} = b` with default tolerances.

 # Safety
 `b` and `x` must point to `n` doubles; `iterations`/`residual` may be NULL.
 */
enum TbStatus tb_solve(const struct TbTensor *t,
                       const double *b,
                       size_t n,
                       enum TbMethod method,
                       double *x,
                       size_t *iterations,
                       double *residual);

/*
 Empty problem of the given order and number of rows.
 */
struct TbProblem *tb_problem_new(size_t order, size_t dim);

/*
 Appends a local policy to `row`. `trailing` holds `nnz * (order - 1)`
 0-based trailing indices; `label` may be NULL for an automatic label.

 # Safety
 Pointers must reference arrays of the stated lengths.
 */
enum TbStatus tb_problem_add_choice(struct TbProblem *p,
                                    size_t row,
                                    const char *label,
                                    size_t nnz,
                                    const size_t *trailing,
                                    const double *values,
                                    double rhs);

/*
 # Safety
 `p` must come from `tb_problem_new` and not be freed twice.
 */
void tb_problem_free(struct TbProblem *p);

/*
 Policy iteration with default options. Writes the solution and the
 chosen choice index per row.

 # Safety
 `u` and `policy` must point to `n` elements (or `policy` NULL).
 */
enum TbStatus tb_policy_iteration(const struct TbProblem *p,
                                  double *u,
                                  size_t *policy,
                                  size_t n,
                                  size_t *outer_iterations,
                                  double *residual);

/*
 Solves a control scheme with a built-in coefficient set (`param` 1 or 2)
 on `M` intervals; `u` receives `M + 1` values. DO uses `K = M / 32` and
 `γ_max = 2`.

 # Safety
 `u` must point to `n >= m + 1` doubles; `outer_iterations` may be NULL.
 */
enum TbStatus tb_control_solve(enum TbScheme scheme,
                               uint32_t param,
                               size_t m,
                               double *u,
                               size_t n,
                               size_t *outer_iterations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TENSOR_BELLMAN_H */
