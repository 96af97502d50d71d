#include "robunmt/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace robunmt::kernels {

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, bool transpose_a,
          const T* b, bool transpose_b, T* c, T beta) {
  using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const RowMat>;
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ni = static_cast<Eigen::Index>(n);
  const auto ki = static_cast<Eigen::Index>(k);
  Eigen::Map<RowMat> cm(c, mi, ni);
  if (beta == T(0)) {
    cm.setZero();
  } else if (beta != T(1)) {
    cm *= beta;
  }
  if (m == 0 || n == 0 || k == 0) return;
  // Stored shapes: A is (m x k) or (k x m); B is (k x n) or (n x k).
  ConstMap am(a, transpose_a ? ki : mi, transpose_a ? mi : ki);
  ConstMap bm(b, transpose_b ? ni : ki, transpose_b ? ki : ni);
  if (!transpose_a && !transpose_b) {
    cm.noalias() += am * bm;
  } else if (!transpose_a && transpose_b) {
    cm.noalias() += am * bm.transpose();
  } else if (transpose_a && !transpose_b) {
    cm.noalias() += am.transpose() * bm;
  } else {
    cm.noalias() += am.transpose() * bm.transpose();
  }
}

template <typename T>
void layer_norm(std::size_t rows, std::size_t cols, const T* x, const T* gamma, const T* beta,
                T eps, T* y, T* normalized, T* inv_std) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * cols;
    T mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<T>(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const T d = xr[c] - mean;
      var += d * d;
    }
    var /= static_cast<T>(cols);
    const T istd = T(1) / std::sqrt(var + eps);
    if (inv_std != nullptr) inv_std[r] = istd;
    T* yr = y + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      const T xhat = (xr[c] - mean) * istd;
      if (normalized != nullptr) normalized[r * cols + c] = xhat;
      yr[c] = xhat * gamma[c] + beta[c];
    }
  }
}

template <typename T>
T gelu(T x) {
  constexpr T kAlpha = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kBeta = T(0.044715);
  const T inner = kAlpha * (x + kBeta * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(inner));
}

template <typename T>
T gelu_derivative(T x) {
  constexpr T kAlpha = T(0.7978845608028654);
  constexpr T kBeta = T(0.044715);
  const T inner = kAlpha * (x + kBeta * x * x * x);
  const T t = std::tanh(inner);
  const T dinner = kAlpha * (T(1) + T(3) * kBeta * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * dinner;
}

template <typename T>
void softmax_row(std::span<T> row) {
  if (row.empty()) return;
  const T peak = *std::max_element(row.begin(), row.end());
  T total = 0;
  for (T& v : row) {
    v = std::exp(v - peak);
    total += v;
  }
  for (T& v : row) v /= total;
}

#define ROBUNMT_INSTANTIATE(T)                                                               \
  template void gemm<T>(std::size_t, std::size_t, std::size_t, const T*, bool, const T*, bool, \
                        T*, T);                                                              \
  template void layer_norm<T>(std::size_t, std::size_t, const T*, const T*, const T*, T, T*,  \
                              T*, T*);                                                       \
  template T gelu<T>(T);                                                                     \
  template T gelu_derivative<T>(T);                                                          \
  template void softmax_row<T>(std::span<T>);

ROBUNMT_INSTANTIATE(float)
ROBUNMT_INSTANTIATE(double)
#undef ROBUNMT_INSTANTIATE

}  // namespace robunmt::kernels
