#pragma once

#include <cstddef>
#include <vector>

#include "nisnn/tensor.hpp"

namespace nisnn {

// Elementwise arithmetic with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float factor);
Tensor relu(const Tensor& x);

/// 1 where x > threshold (strictly), else 0. Carries no gradient; spiking
/// layers attach their own surrogate rule.
Tensor heaviside(const Tensor& x, float threshold);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
/// Swaps the two trailing axes.
Tensor transpose_last2(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// a[..., m, n] x b[..., n, p]. Batch extents must match, or one operand
/// must be a plain matrix that is shared across the other's batch.
Tensor matmul(const Tensor& a, const Tensor& b);

/// x[..., in] * weight[out, in]^T + bias[out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Cross-correlation with "same" zero padding: top/left pad (k-1)/2, the
/// remainder bottom/right. x[B,Cin,H,W], w[Cout,Cin,kh,kw], bias[Cout].
Tensor conv2d_same(const Tensor& x, const Tensor& w, const Tensor& bias);

/// 2x2 pooling with stride 2. Max pooling routes the gradient to the first
/// maximal element in row-major window order.
Tensor max_pool2d(const Tensor& x);
Tensor avg_pool2d(const Tensor& x);

enum class Mode { kTrain, kInfer };

struct BatchNormState {
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float momentum = 0.1F;
  float eps = 1e-5F;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, 0.0F), running_var(channels, 1.0F) {}
};

/// Per-channel normalisation of x[B,C,...] over every axis except C.
/// Training mode normalises with batch statistics and updates `state`.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                 Mode mode);

Tensor softmax_lastdim(const Tensor& x);

}  // namespace nisnn
