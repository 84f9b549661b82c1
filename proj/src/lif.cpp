#include "nisnn/lif.hpp"

#include <cmath>
#include <string>

#include "kernels.hpp"
#include "nisnn/errors.hpp"

namespace nisnn {

namespace {

inline bool in_window(float u, float lo, float hi) { return u > lo && u < hi; }

void check_time_axis(const Tensor& x, const LeakyKernel& kernel) {
  if (x.rank() < 1 || x.shape().back() != kernel.steps()) {
    throw DimensionError("time axis of " + shape_str(x.shape()) + " does not match kernel with " +
                         std::to_string(kernel.steps()) + " steps");
  }
}

// Gradient of the firing stage w.r.t. E_in.
std::vector<float> fire_backward(std::span<const float> grad_spikes, std::span<const float> grad_potential,
                                 std::span<const float> potential, std::span<const float> e_in,
                                 const LeakyKernel& kernel) {
  std::size_t steps = kernel.steps();
  std::size_t n = e_in.size();
  std::size_t neurons = n / steps;
  std::vector<float> du(n, 0.0F);
  for (std::size_t i = 0; i < n; ++i) {
    float g = grad_potential.empty() ? 0.0F : grad_potential[i];
    if (!grad_spikes.empty() && in_window(potential[i], 0.0F, 1.0F)) g += grad_spikes[i];
    du[i] = g;
  }
  // d g(E_in) = -(dU * l_out^T), gated by the surrogate window at E_in.
  std::vector<float> through_reset(n, 0.0F);
  kernels::gemm_nt(neurons, steps, steps, du.data(), kernel.l_out.data().data(), through_reset.data());
  std::vector<float> de(n);
  for (std::size_t i = 0; i < n; ++i) {
    de[i] = du[i] - (in_window(e_in[i], 0.0F, 1.0F) ? through_reset[i] : 0.0F);
  }
  return de;
}

}  // namespace

float LeakyKernel::decay(std::size_t k) const {
  return static_cast<float>(std::exp(-static_cast<double>(k) * delta_t / tau));
}

LeakyKernel build_leaky_kernel(double tau, double delta_t, double v_th, std::size_t t_n) {
  if (!(tau > 0.0) || !(delta_t > 0.0) || !(v_th > 0.0)) {
    throw ConfigError("leaky kernel needs tau > 0, delta_t > 0 and v_th > 0");
  }
  LeakyKernel k;
  k.tau = tau;
  k.delta_t = delta_t;
  k.v_th = v_th;
  k.t_n = t_n;
  std::size_t steps = t_n + 1;
  std::vector<float> l_in(steps * steps, 0.0F);
  std::vector<float> l_out(steps * steps, 0.0F);
  auto vth = static_cast<float>(v_th);
  for (std::size_t i = 0; i < steps; ++i) {
    for (std::size_t j = i; j < steps; ++j) {
      l_in[i * steps + j] = k.decay(j - i);
      if (j > i) l_out[i * steps + j] = vth * k.decay(j - 1 - i);
    }
  }
  k.l_in = Tensor::from_data({steps, steps}, std::move(l_in));
  k.l_out = Tensor::from_data({steps, steps}, std::move(l_out));
  return k;
}

Tensor spike(const Tensor& x, float threshold, float lo, float hi) {
  OpCounter::bump("threshold");
  std::vector<float> out(x.numel());
  auto d = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i] > threshold ? 1.0F : 0.0F;
  auto ix = x.impl();
  return make_result("spike", x.shape(), std::move(out), {x}, [ix, lo, hi](const Tape::Node& node) {
    const auto& g = node.outputs[0]->grad;
    float* gx = node.inputs[0]->grad_buffer().data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in_window(ix->data[i], lo, hi)) gx[i] += g[i];
    }
  });
}

NeuronOutput nilif_fire(const Tensor& e_in, const LeakyKernel& kernel) {
  check_time_axis(e_in, kernel);
  std::size_t steps = kernel.steps();
  std::size_t n = e_in.numel();
  std::size_t neurons = n / steps;
  auto vth = static_cast<float>(kernel.v_th);
  auto e = e_in.data();

  OpCounter::bump("threshold");
  std::vector<float> upper(n);
  for (std::size_t i = 0; i < n; ++i) upper[i] = e[i] > vth ? 1.0F : 0.0F;

  OpCounter::bump("matmul");
  std::vector<float> reset(n, 0.0F);
  kernels::gemm_nn(neurons, steps, steps, upper.data(), kernel.l_out.data().data(), reset.data());

  OpCounter::bump("sub");
  std::vector<float> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = e[i] - reset[i];

  OpCounter::bump("threshold");
  std::vector<float> o(n);
  for (std::size_t i = 0; i < n; ++i) o[i] = u[i] > vth ? 1.0F : 0.0F;

  auto ie = e_in.impl();
  auto saved_kernel = std::make_shared<LeakyKernel>(kernel);
  auto results = make_results(
      "nilif_fire", {e_in.shape(), e_in.shape()}, {std::move(o), std::move(u)}, {e_in},
      [ie, saved_kernel](const Tape::Node& node) {
        const auto& go = node.outputs[0]->grad;
        const auto& gu = node.outputs[1]->grad;
        const auto& pot = node.outputs[1]->data;
        auto de = fire_backward(go, gu, pot, ie->data, *saved_kernel);
        node.inputs[0]->accumulate_grad(de);
      });
  return {results[0], results[1]};
}

NeuronOutput nilif_forward(const Tensor& x_weighted, const LeakyKernel& kernel) {
  check_time_axis(x_weighted, kernel);
  if (x_weighted.rank() == 1) {
    NeuronOutput out = nilif_forward(reshape(x_weighted, {1, kernel.steps()}), kernel);
    return {reshape(out.spikes, x_weighted.shape()), reshape(out.potential, x_weighted.shape())};
  }
  Tensor e_in = matmul(x_weighted, kernel.l_in);
  return nilif_fire(e_in, kernel);
}

std::vector<float> nilif_backward(std::span<const float> grad_spikes, std::span<const float> grad_potential,
                                  std::span<const float> potential, std::span<const float> e_in,
                                  const LeakyKernel& kernel) {
  std::size_t steps = kernel.steps();
  if (e_in.size() % steps != 0 || potential.size() != e_in.size() ||
      (!grad_spikes.empty() && grad_spikes.size() != e_in.size()) ||
      (!grad_potential.empty() && grad_potential.size() != e_in.size())) {
    throw DimensionError("nilif_backward buffers do not match the kernel time axis");
  }
  auto de = fire_backward(grad_spikes, grad_potential, potential, e_in, kernel);
  std::vector<float> dx(de.size(), 0.0F);
  kernels::gemm_nt(de.size() / steps, steps, steps, de.data(), kernel.l_in.data().data(), dx.data());
  return dx;
}

NeuronOutput exact_lif_solve(const Tensor& x_weighted, const LeakyKernel& kernel) {
  check_time_axis(x_weighted, kernel);
  std::size_t steps = kernel.steps();
  std::size_t neurons = x_weighted.numel() / steps;
  auto vth = static_cast<float>(kernel.v_th);
  std::vector<float> decay(steps);
  for (std::size_t k = 0; k < steps; ++k) decay[k] = kernel.decay(k);

  auto x = x_weighted.data();
  std::vector<float> u(x.size());
  std::vector<float> o(x.size());
  for (std::size_t nidx = 0; nidx < neurons; ++nidx) {
    const float* xn = x.data() + nidx * steps;
    float* un = u.data() + nidx * steps;
    float* on = o.data() + nidx * steps;
    for (std::size_t t = 0; t < steps; ++t) {
      float e = 0.0F;
      for (std::size_t i = 0; i <= t; ++i) e += xn[i] * decay[t - i];
      float reset = 0.0F;
      for (std::size_t i = 0; i < t; ++i) {
        if (on[i] != 0.0F) reset += vth * decay[t - 1 - i];
      }
      un[t] = e - reset;
      on[t] = un[t] > vth ? 1.0F : 0.0F;
    }
  }
  return {Tensor::from_data(x_weighted.shape(), std::move(o)), Tensor::from_data(x_weighted.shape(), std::move(u))};
}

IterativeLif IterativeLif::from_kernel(const LeakyKernel& kernel, float surrogate_alpha) {
  IterativeLif layer;
  layer.lambda = static_cast<float>(std::exp(-kernel.delta_t / kernel.tau));
  layer.v_th = static_cast<float>(kernel.v_th);
  layer.surrogate_alpha = surrogate_alpha;
  return layer;
}

NeuronOutput iterative_lif_forward(const Tensor& x_weighted, const IterativeLif& layer) {
  if (x_weighted.rank() < 1) throw DimensionError("iterative LIF needs a time axis");
  if (!(layer.lambda > 0.0F && layer.lambda < 1.0F)) throw ConfigError("iterative LIF decay must lie in (0,1)");
  std::size_t steps = x_weighted.shape().back();
  std::size_t neurons = x_weighted.numel() / steps;
  auto x = x_weighted.data();
  std::vector<float> u(x.size());
  std::vector<float> o(x.size());
  OpCounter::bump("iterative_step", neurons * steps);
  for (std::size_t nidx = 0; nidx < neurons; ++nidx) {
    float prev_u = 0.0F;
    float prev_o = 0.0F;
    for (std::size_t t = 0; t < steps; ++t) {
      std::size_t i = nidx * steps + t;
      u[i] = layer.lambda * (prev_u - layer.v_th * prev_o) + x[i];
      o[i] = u[i] > layer.v_th ? 1.0F : 0.0F;
      prev_u = u[i];
      prev_o = o[i];
    }
  }
  auto results = make_results(
      "iterative_lif", {x_weighted.shape(), x_weighted.shape()}, {std::move(o), std::move(u)}, {x_weighted},
      [layer, steps, neurons](const Tape::Node& node) {
        const auto& go = node.outputs[0]->grad;
        const auto& gu = node.outputs[1]->grad;
        const auto& pot = node.outputs[1]->data;
        std::vector<float> gx(pot.size());
        for (std::size_t nidx = 0; nidx < neurons; ++nidx) {
          float next = 0.0F;  // dL/du^{t+1}
          for (std::size_t t = steps; t-- > 0;) {
            std::size_t i = nidx * steps + t;
            float du = layer.lambda * next;
            if (!gu.empty()) du += gu[i];
            if (!go.empty()) {
              float s = 1.0F / (1.0F + std::exp(-layer.surrogate_alpha * (pot[i] - layer.v_th)));
              du += go[i] * layer.surrogate_alpha * s * (1.0F - s);
            }
            gx[i] = du;
            next = du;
          }
        }
        node.inputs[0]->accumulate_grad(gx);
      });
  return {results[0], results[1]};
}

SparsityRates sparsity_compare(const Tensor& x_weighted, const LeakyKernel& kernel) {
  NoGradScope no_grad;
  auto rate = [](const Tensor& t) {
    double s = 0.0;
    for (float v : t.data()) s += v;
    return s / static_cast<double>(t.numel());
  };
  SparsityRates r;
  r.nilif = rate(nilif_forward(x_weighted, kernel).spikes);
  r.exact = rate(exact_lif_solve(x_weighted, kernel).spikes);
  r.iterative = rate(iterative_lif_forward(x_weighted, IterativeLif::from_kernel(kernel)).spikes);
  return r;
}

NiLifLayer::NiLifLayer(LeakyKernel kernel, std::size_t channels, bool membrane_bn)
    : kernel_(std::move(kernel)), state_(channels) {
  if (membrane_bn) {
    gamma_ = Tensor::parameter({channels}, std::vector<float>(channels, 1.0F));
    beta_ = Tensor::parameter({channels}, std::vector<float>(channels, 0.0F));
  }
}

NeuronOutput NiLifLayer::forward(const Tensor& x, Mode mode) {
  Tensor e_in = matmul(x, kernel_.l_in);
  if (has_bn()) e_in = batchnorm(e_in, gamma_, beta_, state_, mode);
  return nilif_fire(e_in, kernel_);
}

}  // namespace nisnn
