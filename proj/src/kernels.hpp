#pragma once

// Dense float kernels shared by the op implementations. All loops run in a
// fixed order so results are reproducible bit for bit.

#include <cstddef>

namespace nisnn::kernels {

/// C[m,p] += A[m,n] * B[n,p]. Zero entries of A are skipped, which is what
/// makes binary (spike) operands cheap.
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t p, const float* a, const float* b,
                    float* c) {
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * p;
    const float* arow = a + i * n;
    for (std::size_t k = 0; k < n; ++k) {
      const float av = arow[k];
      if (av == 0.0F) continue;
      const float* brow = b + k * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

/// C[m,p] += A[m,n] * B[p,n]^T.
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t p, const float* a, const float* b,
                    float* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * n;
    for (std::size_t j = 0; j < p; ++j) {
      const float* brow = b + j * n;
      float acc = 0.0F;
      for (std::size_t k = 0; k < n; ++k) acc += arow[k] * brow[k];
      c[i * p + j] += acc;
    }
  }
}

/// C[m,p] += A[n,m]^T * B[n,p].
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t p, const float* a, const float* b,
                    float* c) {
  for (std::size_t k = 0; k < n; ++k) {
    const float* arow = a + k * m;
    const float* brow = b + k * p;
    for (std::size_t i = 0; i < m; ++i) {
      const float av = arow[i];
      if (av == 0.0F) continue;
      float* crow = c + i * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace nisnn::kernels
