#pragma once

// Reference implementations in double precision, written directly from the
// defining formulas and sharing no code with the library kernels.

#include <cmath>
#include <cstddef>
#include <vector>

#include "nisnn/tensor.hpp"

namespace oracle {

inline std::vector<double> matmul(const std::vector<float>& a, const std::vector<float>& b, std::size_t m,
                                  std::size_t n, std::size_t p) {
  std::vector<double> c(m * p, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t k = 0; k < n; ++k) c[i * p + j] += static_cast<double>(a[i * n + k]) * b[k * p + j];
  return c;
}

// "same" cross-correlation, top/left padding (k-1)/2.
inline std::vector<double> conv_same(const nisnn::Tensor& x, const nisnn::Tensor& w, const nisnn::Tensor& b) {
  const std::size_t bn = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const auto ph = static_cast<std::ptrdiff_t>((kh - 1) / 2), pw = static_cast<std::ptrdiff_t>((kw - 1) / 2);
  std::vector<double> out(bn * co * h * wd, 0.0);
  for (std::size_t n = 0; n < bn; ++n)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < wd; ++j) {
          double s = b.data()[o];
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                auto r = static_cast<std::ptrdiff_t>(i + u) - ph;
                auto q = static_cast<std::ptrdiff_t>(j + v) - pw;
                if (r < 0 || q < 0 || r >= static_cast<std::ptrdiff_t>(h) || q >= static_cast<std::ptrdiff_t>(wd))
                  continue;
                s += static_cast<double>(x.data()[((n * ci + c) * h + r) * wd + q]) *
                     w.data()[((o * ci + c) * kh + u) * kw + v];
              }
          out[((n * co + o) * h + i) * wd + j] = s;
        }
  return out;
}

// Soft-reset LIF in double, reset applied after the leak of the firing step:
// v^t = lambda v^{t-1} - v_th o^{t-1} + x^t, o^t = [v^t > v_th].
struct LifTrace {
  std::vector<double> potential;
  std::vector<int> spikes;
};

inline LifTrace lif_recurrence(const std::vector<float>& x, double tau, double dt, double v_th) {
  const double lambda = std::exp(-dt / tau);
  LifTrace tr;
  double v = 0.0;
  int o = 0;
  for (float xi : x) {
    v = lambda * v - v_th * o + xi;
    o = v > v_th ? 1 : 0;
    tr.potential.push_back(v);
    tr.spikes.push_back(o);
  }
  return tr;
}

// Decay sum with no reset: E^t = sum_{i<=t} x^i exp(-(t-i) dt / tau).
inline std::vector<double> leaky_accumulate(const std::vector<float>& x, double tau, double dt) {
  std::vector<double> e(x.size(), 0.0);
  for (std::size_t t = 0; t < x.size(); ++t)
    for (std::size_t i = 0; i <= t; ++i) e[t] += x[i] * std::exp(-static_cast<double>(t - i) * dt / tau);
  return e;
}

}  // namespace oracle
