#include "charparse/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace charparse::kernels {

namespace {
std::atomic<std::size_t> g_threshold{1u << 16};
}

void set_parallel_threshold(std::size_t work) { g_threshold = work; }
std::size_t parallel_threshold() { return g_threshold; }

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  // Bring B into row-major k x n so the inner loop is a contiguous axpy.
  std::vector<T> packed;
  const T* bp = b;
  std::size_t ldbp = ldb;
  if (trans_b) {
    packed.resize(k * n);
    for (std::size_t j = 0; j < n; ++j) {
      const T* src = b + j * ldb;
      for (std::size_t p = 0; p < k; ++p) packed[p * n + j] = src[p];
    }
    bp = packed.data();
    ldbp = n;
  }
  const bool parallel = m > 1 && m * n * k >= g_threshold.load(std::memory_order_relaxed);
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    T* crow = c + i * ldc;
    if (!accumulate) std::fill(crow, crow + n, T(0));
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = trans_a ? a[p * lda + i] : a[i * lda + p];
      const T* brow = bp + p * ldbp;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

template <typename T>
void gemm_reference(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                    const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c,
                    std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T sum = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * lda + i] : a[i * lda + p];
        const T bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
        sum += av * bv;
      }
      c[i * ldc + j] = accumulate ? c[i * ldc + j] + sum : sum;
    }
  }
}

template <typename T>
void conv1d(std::size_t batch, std::size_t len, std::size_t channels, std::size_t width,
            std::size_t filters, const T* x, const T* w, T* out) {
  if (len < width) return;
  const std::size_t steps = len - width + 1;
  const std::size_t patch = width * channels;
  // Each window of `width` rows is contiguous, so within one batch item the
  // im2col matrix is x itself read with row stride `channels`.
  std::vector<T> cols(batch * steps * patch);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* xb = x + b * len * channels;
    for (std::size_t t = 0; t < steps; ++t) {
      std::copy(xb + t * channels, xb + t * channels + patch, cols.data() + (b * steps + t) * patch);
    }
  }
  gemm(false, false, batch * steps, filters, patch, cols.data(), patch, w, filters, out, filters,
       false);
}

template <typename T>
void conv1d_reference(std::size_t batch, std::size_t len, std::size_t channels, std::size_t width,
                      std::size_t filters, const T* x, const T* w, T* out) {
  if (len < width) return;
  const std::size_t steps = len - width + 1;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t f = 0; f < filters; ++f) {
        T sum = 0;
        for (std::size_t dw = 0; dw < width; ++dw) {
          for (std::size_t ch = 0; ch < channels; ++ch) {
            sum += x[(b * len + t + dw) * channels + ch] * w[(dw * channels + ch) * filters + f];
          }
        }
        out[(b * steps + t) * filters + f] = sum;
      }
    }
  }
}

namespace {

template <typename T>
void softmax_row(std::size_t cols, const T* x, T* y) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, x[j]);
  if (mx == -std::numeric_limits<T>::infinity()) {
    std::fill(y, y + cols, T(0));
    return;
  }
  T sum = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  const T inv = T(1) / sum;
  for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
}

}  // namespace

template <typename T>
void softmax_rows(std::size_t rows, std::size_t cols, const T* x, T* y) {
  const bool parallel = rows > 1 && rows * cols * 8 >= g_threshold.load(std::memory_order_relaxed);
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    softmax_row(cols, x + static_cast<std::size_t>(r) * cols, y + static_cast<std::size_t>(r) * cols);
  }
}

template <typename T>
void softmax_rows_reference(std::size_t rows, std::size_t cols, const T* x, T* y) {
  for (std::size_t r = 0; r < rows; ++r) softmax_row(cols, x + r * cols, y + r * cols);
}

#define CHARPARSE_KERNELS(T)                                                                    \
  template void gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, const T*,            \
                        std::size_t, const T*, std::size_t, T*, std::size_t, bool);             \
  template void gemm_reference<T>(bool, bool, std::size_t, std::size_t, std::size_t, const T*,  \
                                  std::size_t, const T*, std::size_t, T*, std::size_t, bool);   \
  template void conv1d<T>(std::size_t, std::size_t, std::size_t, std::size_t, std::size_t,      \
                          const T*, const T*, T*);                                              \
  template void conv1d_reference<T>(std::size_t, std::size_t, std::size_t, std::size_t,         \
                                    std::size_t, const T*, const T*, T*);                       \
  template void softmax_rows<T>(std::size_t, std::size_t, const T*, T*);                        \
  template void softmax_rows_reference<T>(std::size_t, std::size_t, const T*, T*);

CHARPARSE_KERNELS(float)
CHARPARSE_KERNELS(double)

}  // namespace charparse::kernels
