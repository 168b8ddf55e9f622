#pragma once

// Dense and sparse inner loops shared by the autodiff engine and the FEM
// solver. Every kernel exists twice: a plain serial reference in
// `kernels::serial` and an OpenMP version in `kernels`. The OpenMP versions
// split work over output rows only and keep each row's reduction order
// identical to the serial one, so both produce bit-identical results for any
// thread count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace physgnn::kernels {

// Contiguous row-major matrix views.
struct ConstMatrixView {
  const double* data;
  std::size_t rows;
  std::size_t cols;
};

struct MatrixView {
  double* data;
  std::size_t rows;
  std::size_t cols;
};

// Compressed sparse rows; `col` and `val` have `row_ptr.back()` entries.
struct CsrView {
  std::span<const std::int64_t> row_ptr;
  std::span<const std::int32_t> col;
  std::span<const double> val;
};

#define PHYSGNN_KERNEL_DECLS                                                     \
  /* C += A * B          (m x k)(k x n) */                                       \
  void gemm_nn_acc(ConstMatrixView a, ConstMatrixView b, MatrixView c);          \
  /* C += A * B^T        (m x k)(n x k) */                                       \
  void gemm_nt_acc(ConstMatrixView a, ConstMatrixView b, MatrixView c);          \
  /* C += A^T * B        (k x m)(k x n) */                                       \
  void gemm_tn_acc(ConstMatrixView a, ConstMatrixView b, MatrixView c);          \
  /* out[s] = sum of rows offsets[s]..offsets[s+1] of x */                       \
  void segment_sum(ConstMatrixView x, std::span<const std::int64_t> offsets,     \
                   MatrixView out);                                              \
  /* out[s] = elementwise max over the segment (0 if empty); argmax records */   \
  /* the winning row per (segment, column), -1 when empty. Ties: lowest row. */  \
  void segment_max(ConstMatrixView x, std::span<const std::int64_t> offsets,     \
                   MatrixView out, std::span<std::int64_t> argmax);              \
  /* out[i] = x[index[i]] */                                                     \
  void gather_rows(ConstMatrixView x, std::span<const std::int64_t> index,       \
                   MatrixView out);                                              \
  /* out[index[i]] += g[i]; deterministic order (ascending i per target row) */  \
  void scatter_add_rows(ConstMatrixView g, std::span<const std::int64_t> index,  \
                        MatrixView out);                                         \
  /* y = A x */                                                                  \
  void spmv(CsrView a, std::span<const double> x, std::span<double> y);          \
  double dot(std::span<const double> a, std::span<const double> b);

namespace serial {
PHYSGNN_KERNEL_DECLS
}  // namespace serial

PHYSGNN_KERNEL_DECLS

#undef PHYSGNN_KERNEL_DECLS

// Number of OpenMP threads the parallel kernels use.
int thread_count();
void set_thread_count(int n);

}  // namespace physgnn::kernels
