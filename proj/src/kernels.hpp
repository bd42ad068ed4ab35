#pragma once

// Dense f32 kernels. Every output element is accumulated sequentially in
// ascending index order of the reduced dimension, one output row at a time,
// so results do not depend on how many rows are processed together.

#include <cstddef>

namespace act::kernels {

// C[m×n] (+)= A[m×k] · B[k×n]
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* __restrict a,
                    const float* __restrict b, float* __restrict c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    float* __restrict crow = c + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0f;
    }
    const float* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      const float* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[k×n] (+)= A[m×k]ᵀ · B[m×n]; reduction over the m rows in order.
inline void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const float* __restrict a,
                    const float* __restrict b, float* __restrict c, bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < k * n; ++i) c[i] = 0.0f;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    const float* __restrict brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      float* __restrict crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// out[cols×rows] = in[rows×cols]ᵀ
inline void transpose(std::size_t rows, std::size_t cols, const float* __restrict in, float* __restrict out) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = in[i * cols + j];
}

}  // namespace act::kernels
