#pragma once

#include <cstddef>

namespace charparse::kernels {

/// C[m x n] = op(A) op(B), or C += op(A) op(B) when `accumulate`.
/// op(A) is m x k, op(B) is k x n. Leading dimensions are row strides of the
/// stored (untransposed) arrays, so overlapping rows are allowed for inputs.
/// Rows of C are distributed over OpenMP threads once the problem is large
/// enough; each output element is summed in a fixed order regardless of the
/// thread count.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate);

/// Serial triple loop with identical semantics. Kept as the test oracle and
/// the benchmark baseline.
template <typename T>
void gemm_reference(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                    const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c,
                    std::size_t ldc, bool accumulate);

/// Valid 1-D convolution over rows: x is [batch x len x channels], w is
/// [(width*channels) x filters], out is [batch x (len-width+1) x filters].
/// Lowered to im2col + gemm.
template <typename T>
void conv1d(std::size_t batch, std::size_t len, std::size_t channels, std::size_t width,
            std::size_t filters, const T* x, const T* w, T* out);

/// Direct nested-loop convolution, same contract as conv1d.
template <typename T>
void conv1d_reference(std::size_t batch, std::size_t len, std::size_t channels, std::size_t width,
                      std::size_t filters, const T* x, const T* w, T* out);

/// Row-wise softmax over the trailing dimension (rows x cols).
template <typename T>
void softmax_rows(std::size_t rows, std::size_t cols, const T* x, T* y);

template <typename T>
void softmax_rows_reference(std::size_t rows, std::size_t cols, const T* x, T* y);

/// Work (m*n*k multiply-adds) below which kernels stay single-threaded.
void set_parallel_threshold(std::size_t work);
std::size_t parallel_threshold();

}  // namespace charparse::kernels
