#include "physgnn/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <limits>
#include <vector>

namespace physgnn::kernels {

namespace {
// Below this much work the fork/join overhead dominates.
constexpr std::size_t kParallelThreshold = 1 << 14;

bool worth_parallel(std::size_t work) { return work >= kParallelThreshold; }
}  // namespace

int thread_count() { return omp_get_max_threads(); }

void set_thread_count(int n) {
  if (n > 0) omp_set_num_threads(n);
}

// Adds sum_k coef(k) * b[k][j0 .. j0+W) to crow[j0 .. j0+W), keeping the W
// partial sums in registers. Each entry accumulates in ascending k, the same
// order as the serial kernels.
template <std::size_t W, typename Coef>
inline void accumulate_block(double* crow, const double* b, std::size_t ldb, std::size_t kdim, std::size_t j0,
                             Coef coef) {
  double acc[W];
  for (std::size_t w = 0; w < W; ++w) acc[w] = crow[j0 + w];
  for (std::size_t k = 0; k < kdim; ++k) {
    const double s = coef(k);
    const double* brow = b + k * ldb + j0;
#pragma GCC unroll 8
    for (std::size_t w = 0; w < W; ++w) acc[w] += s * brow[w];
  }
  for (std::size_t w = 0; w < W; ++w) crow[j0 + w] = acc[w];
}

template <typename Coef>
inline void accumulate_row(double* crow, const double* b, std::size_t ldb, std::size_t kdim, std::size_t n,
                           Coef coef) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) accumulate_block<8>(crow, b, ldb, kdim, j, coef);
  for (; j < n; ++j) accumulate_block<1>(crow, b, ldb, kdim, j, coef);
}

void gemm_nn_acc(ConstMatrixView a, ConstMatrixView b, MatrixView c) {
  const auto m = static_cast<std::int64_t>(a.rows);
#pragma omp parallel for schedule(static) if (worth_parallel(a.rows * a.cols * b.cols))
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a.data + i * a.cols;
    accumulate_row(c.data + i * c.cols, b.data, b.cols, a.cols, b.cols, [arow](std::size_t k) { return arow[k]; });
  }
}

void gemm_nt_acc(ConstMatrixView a, ConstMatrixView b, MatrixView c) {
  std::vector<double> bt(b.rows * b.cols);
  for (std::size_t j = 0; j < b.rows; ++j)
    for (std::size_t k = 0; k < b.cols; ++k) bt[k * b.rows + j] = b.data[j * b.cols + k];
  kernels::gemm_nn_acc(a, ConstMatrixView{bt.data(), b.cols, b.rows}, c);
}

void gemm_tn_acc(ConstMatrixView a, ConstMatrixView b, MatrixView c) {
  const auto m = static_cast<std::int64_t>(a.cols);
#pragma omp parallel for schedule(static) if (worth_parallel(a.rows * a.cols * b.cols))
  for (std::int64_t i = 0; i < m; ++i) {
    const double* acol = a.data + i;
    const std::size_t lda = a.cols;
    accumulate_row(c.data + i * c.cols, b.data, b.cols, a.rows, b.cols,
                   [acol, lda](std::size_t k) { return acol[k * lda]; });
  }
}

void segment_sum(ConstMatrixView x, std::span<const std::int64_t> offsets,
                 MatrixView out) {
  const std::size_t n = x.cols;
  const auto segs = static_cast<std::int64_t>(offsets.size()) - 1;
#pragma omp parallel for schedule(static) if (worth_parallel(x.rows * n))
  for (std::int64_t s = 0; s < segs; ++s) {
    double* orow = out.data + s * n;
    std::fill(orow, orow + n, 0.0);
    for (auto r = offsets[s]; r < offsets[s + 1]; ++r) {
      const double* xrow = x.data + r * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += xrow[j];
    }
  }
}

void segment_max(ConstMatrixView x, std::span<const std::int64_t> offsets,
                 MatrixView out, std::span<std::int64_t> argmax) {
  const std::size_t n = x.cols;
  const auto segs = static_cast<std::int64_t>(offsets.size()) - 1;
#pragma omp parallel for schedule(static) if (worth_parallel(x.rows * n))
  for (std::int64_t s = 0; s < segs; ++s) {
    double* orow = out.data + s * n;
    std::int64_t* arow = argmax.data() + s * n;
    std::fill(orow, orow + n, -std::numeric_limits<double>::infinity());
    std::fill(arow, arow + n, -1);
    for (auto r = offsets[s]; r < offsets[s + 1]; ++r) {
      const double* xrow = x.data + r * n;
      for (std::size_t j = 0; j < n; ++j) {
        if (xrow[j] > orow[j]) {
          orow[j] = xrow[j];
          arow[j] = r;
        }
      }
    }
    for (std::size_t j = 0; j < n; ++j)
      if (arow[j] < 0) orow[j] = 0.0;
  }
}

void gather_rows(ConstMatrixView x, std::span<const std::int64_t> index,
                 MatrixView out) {
  const std::size_t n = x.cols;
  const auto rows = static_cast<std::int64_t>(index.size());
#pragma omp parallel for schedule(static) if (worth_parallel(index.size() * n))
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* src = x.data + index[i] * n;
    std::copy(src, src + n, out.data + i * n);
  }
}

void scatter_add_rows(ConstMatrixView g, std::span<const std::int64_t> index,
                      MatrixView out) {
  const std::size_t n = g.cols;
  if (!worth_parallel(index.size() * n)) {
    serial::scatter_add_rows(g, index, out);
    return;
  }
  // Bucket sources by target row (stable), then each target row is owned by
  // one thread and accumulated in ascending source order.
  std::vector<std::int64_t> start(out.rows + 1, 0);
  for (auto t : index) ++start[t + 1];
  for (std::size_t r = 0; r < out.rows; ++r) start[r + 1] += start[r];
  std::vector<std::int64_t> order(index.size());
  {
    std::vector<std::int64_t> fill(start.begin(), start.end() - 1);
    for (std::size_t i = 0; i < index.size(); ++i) order[fill[index[i]]++] = static_cast<std::int64_t>(i);
  }
  const auto rows = static_cast<std::int64_t>(out.rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    double* dst = out.data + r * n;
    for (auto k = start[r]; k < start[r + 1]; ++k) {
      const double* src = g.data + order[k] * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
    }
  }
}

void spmv(CsrView a, std::span<const double> x, std::span<double> y) {
  const auto rows = static_cast<std::int64_t>(a.row_ptr.size()) - 1;
#pragma omp parallel for schedule(static) if (worth_parallel(a.val.size()))
  for (std::int64_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (auto k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) s += a.val[k] * x[a.col[k]];
    y[r] = s;
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  constexpr std::size_t kBlock = 1024;
  const std::size_t blocks = (a.size() + kBlock - 1) / kBlock;
  std::vector<double> partial(blocks, 0.0);
  const auto nb = static_cast<std::int64_t>(blocks);
#pragma omp parallel for schedule(static) if (worth_parallel(a.size()))
  for (std::int64_t blk = 0; blk < nb; ++blk) {
    const std::size_t lo = blk * kBlock;
    const std::size_t hi = std::min(a.size(), lo + kBlock);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
    partial[blk] = s;
  }
  double s = 0.0;
  for (double p : partial) s += p;
  return s;
}

}  // namespace physgnn::kernels
