#include "physgnn/kernels.hpp"

#include <algorithm>
#include <limits>
#include <vector>

namespace physgnn::kernels::serial {

void gemm_nn_acc(ConstMatrixView a, ConstMatrixView b, MatrixView c) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    double* crow = c.data + i * c.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a.data[i * a.cols + k];
      const double* brow = b.data + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
}

void gemm_nt_acc(ConstMatrixView a, ConstMatrixView b, MatrixView c) {
  // Transpose B once so the inner loop runs along contiguous rows.
  std::vector<double> bt(b.rows * b.cols);
  for (std::size_t j = 0; j < b.rows; ++j)
    for (std::size_t k = 0; k < b.cols; ++k) bt[k * b.rows + j] = b.data[j * b.cols + k];
  serial::gemm_nn_acc(a, ConstMatrixView{bt.data(), b.cols, b.rows}, c);
}

void gemm_tn_acc(ConstMatrixView a, ConstMatrixView b, MatrixView c) {
  for (std::size_t i = 0; i < a.cols; ++i) {
    double* crow = c.data + i * c.cols;
    for (std::size_t k = 0; k < a.rows; ++k) {
      const double aki = a.data[k * a.cols + i];
      const double* brow = b.data + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
    }
  }
}

void segment_sum(ConstMatrixView x, std::span<const std::int64_t> offsets,
                 MatrixView out) {
  const std::size_t n = x.cols;
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    double* orow = out.data + s * n;
    for (std::size_t j = 0; j < n; ++j) orow[j] = 0.0;
    for (auto r = offsets[s]; r < offsets[s + 1]; ++r) {
      const double* xrow = x.data + r * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += xrow[j];
    }
  }
}

void segment_max(ConstMatrixView x, std::span<const std::int64_t> offsets,
                 MatrixView out, std::span<std::int64_t> argmax) {
  const std::size_t n = x.cols;
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    double* orow = out.data + s * n;
    std::int64_t* arow = argmax.data() + s * n;
    for (std::size_t j = 0; j < n; ++j) {
      orow[j] = 0.0;
      arow[j] = -1;
      double best = -std::numeric_limits<double>::infinity();
      for (auto r = offsets[s]; r < offsets[s + 1]; ++r) {
        const double v = x.data[r * n + j];
        if (v > best) {
          best = v;
          arow[j] = r;
        }
      }
      if (arow[j] >= 0) orow[j] = best;
    }
  }
}

void gather_rows(ConstMatrixView x, std::span<const std::int64_t> index,
                 MatrixView out) {
  const std::size_t n = x.cols;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const double* src = x.data + index[i] * n;
    double* dst = out.data + i * n;
    for (std::size_t j = 0; j < n; ++j) dst[j] = src[j];
  }
}

void scatter_add_rows(ConstMatrixView g, std::span<const std::int64_t> index,
                      MatrixView out) {
  const std::size_t n = g.cols;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const double* src = g.data + i * n;
    double* dst = out.data + index[i] * n;
    for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
  }
}

void spmv(CsrView a, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r + 1 < a.row_ptr.size(); ++r) {
    double s = 0.0;
    for (auto k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) s += a.val[k] * x[a.col[k]];
    y[r] = s;
  }
}

// Partial sums over fixed 1024-element blocks, matching the parallel kernel.
double dot(std::span<const double> a, std::span<const double> b) {
  constexpr std::size_t kBlock = 1024;
  double s = 0.0;
  for (std::size_t lo = 0; lo < a.size(); lo += kBlock) {
    const std::size_t hi = std::min(a.size(), lo + kBlock);
    double p = 0.0;
    for (std::size_t i = lo; i < hi; ++i) p += a[i] * b[i];
    s += p;
  }
  return s;
}

}  // namespace physgnn::kernels::serial
