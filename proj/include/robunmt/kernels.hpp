#pragma once

// Dense numeric kernels shared by the autodiff graph and the no-grad
// inference path. All matrices are row-major.

#include <cstddef>
#include <span>

namespace robunmt::kernels {

// C = beta * C + op(A) * op(B), op(A) is m x k, op(B) is k x n.
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, bool transpose_a,
          const T* b, bool transpose_b, T* c, T beta);

// Row-wise layer normalization. `normalized` and `inv_std` are optional
// outputs (may be empty) used by the backward pass.
template <typename T>
void layer_norm(std::size_t rows, std::size_t cols, const T* x, const T* gamma, const T* beta,
                T eps, T* y, T* normalized, T* inv_std);

// tanh approximation of GELU.
template <typename T>
T gelu(T x);
template <typename T>
T gelu_derivative(T x);

// In-place numerically stable softmax over a contiguous row.
template <typename T>
void softmax_row(std::span<T> row);

}  // namespace robunmt::kernels
