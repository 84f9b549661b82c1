#pragma once

#include <cstddef>
#include <optional>

#include "nisnn/ops.hpp"
#include "nisnn/tensor.hpp"

namespace nisnn {

/// Triangular decay matrices that turn LIF dynamics over a fixed window of
/// time steps into matrix products.
///
/// l_in[i][j]  = exp(-(j - i) * delta_t / tau) for j >= i, else 0.
/// l_out[i][j] = v_th * l_in[i][j - 1] for j > i, else 0.
///
/// A row vector x of weighted inputs gives the no-reset potential x * l_in;
/// a row vector o of spikes gives the accumulated soft-reset o * l_out.
struct LeakyKernel {
  double tau = 2.0;
  double delta_t = 1.0;
  double v_th = 0.5;
  std::size_t t_n = 0;  // index of the last step; the window has t_n + 1 steps
  Tensor l_in;
  Tensor l_out;

  std::size_t steps() const { return t_n + 1; }
  /// Decay after `k` steps, exp(-k * delta_t / tau), rounded to float.
  float decay(std::size_t k) const;
};

LeakyKernel build_leaky_kernel(double tau, double delta_t, double v_th, std::size_t t_n);

struct NeuronOutput {
  Tensor spikes;     // {0,1}
  Tensor potential;  // membrane potential U
};

/// Spike op with a rectangular surrogate: forward is heaviside(x, threshold),
/// backward passes the gradient where lo < x < hi.
Tensor spike(const Tensor& x, float threshold, float lo = 0.0F, float hi = 1.0F);

/// Non-iterative firing stage applied to the accumulated input E_in:
///   U = E_in - g(E_in) * l_out,  O = g(U).
/// The time axis is the last axis of `e_in`; every other axis indexes an
/// independent neuron.
NeuronOutput nilif_fire(const Tensor& e_in, const LeakyKernel& kernel);

/// Full non-iterative LIF: E_in = x * l_in followed by nilif_fire.
NeuronOutput nilif_forward(const Tensor& x_weighted, const LeakyKernel& kernel);

/// Explicit backward of nilif_forward given upstream gradients on the spikes
/// (and optionally on U). Returns the gradient w.r.t. x_weighted. Shapes of
/// all arguments equal the forward input shape.
std::vector<float> nilif_backward(std::span<const float> grad_spikes, std::span<const float> grad_potential,
                                  std::span<const float> potential, std::span<const float> e_in,
                                  const LeakyKernel& kernel);

/// Causal step-by-step solution of the un-approximated dynamics
///   u^t = sum_{i<=t} x^i L(t-i) - sum_{i<t} o^i v_th L(t-1-i),  o^t = g(u^t).
/// Forward only. Its decay coefficients are computed from (tau, delta_t,
/// v_th) directly, independent of the kernel's matrices.
NeuronOutput exact_lif_solve(const Tensor& x_weighted, const LeakyKernel& kernel);

/// Recurrent LIF with soft reset:
///   u^t = lambda * (u^{t-1} - v_th o^{t-1}) + x^t,  o^t = g(u^t),  u^{-1} = 0.
/// The input is applied at its own step (same alignment as l_in).
struct IterativeLif {
  float lambda = 0.6065307F;
  float v_th = 0.5F;
  float surrogate_alpha = 4.0F;

  static IterativeLif from_kernel(const LeakyKernel& kernel, float surrogate_alpha = 4.0F);
};

/// Differentiable through the membrane recurrence (factor lambda per step);
/// spikes use a sigmoid surrogate alpha*s*(1-s), s = sigmoid(alpha (u - v_th)).
/// The reset term is treated as a constant in the backward pass.
NeuronOutput iterative_lif_forward(const Tensor& x_weighted, const IterativeLif& layer);

struct SparsityRates {
  double nilif = 0.0;
  double exact = 0.0;
  double iterative = 0.0;
};

/// Mean firing rates of the three dynamics on the same input batch. The
/// iterative model uses lambda = exp(-delta_t / tau) from the kernel.
SparsityRates sparsity_compare(const Tensor& x_weighted, const LeakyKernel& kernel);

/// NiLIF layer as used inside the network: accumulation through l_in, then
/// optional per-channel membrane batch normalisation of E_in, then firing.
/// Input layout [B,C,S,T]; T is the neuron time axis.
class NiLifLayer {
 public:
  NiLifLayer() = default;
  NiLifLayer(LeakyKernel kernel, std::size_t channels, bool membrane_bn = true);

  NeuronOutput forward(const Tensor& x, Mode mode);

  const LeakyKernel& kernel() const { return kernel_; }
  bool has_bn() const { return gamma_.defined(); }
  const Tensor& gamma() const { return gamma_; }
  const Tensor& beta() const { return beta_; }
  BatchNormState& bn_state() { return state_; }
  const BatchNormState& bn_state() const { return state_; }

 private:
  LeakyKernel kernel_;
  Tensor gamma_;
  Tensor beta_;
  BatchNormState state_;
};

}  // namespace nisnn
