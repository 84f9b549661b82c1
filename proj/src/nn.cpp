#include "nisnn/nn.hpp"

#include <cmath>
#include <numbers>

#include "nisnn/errors.hpp"

namespace nisnn {

double Rng::normal() {
  double u1 = uniform_double();
  double u2 = uniform_double();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ContractError("Rng::below(0)");
  // Rejection sampling keeps the draw unbiased.
  std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v = 0;
  do {
    v = engine_();
  } while (v >= limit);
  return v % n;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finaliser
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<float> kaiming_uniform(std::size_t count, std::size_t fan_in, Rng& rng) {
  auto bound = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in)));
  std::vector<float> w(count);
  for (float& v : w) v = rng.uniform(-bound, bound);
  return w;
}

std::vector<float> bias_uniform(std::size_t count, std::size_t fan_in, Rng& rng) {
  auto bound = static_cast<float>(1.0 / std::sqrt(static_cast<double>(fan_in)));
  std::vector<float> b(count);
  for (float& v : b) v = rng.uniform(-bound, bound);
  return b;
}

Conv2d::Conv2d(std::size_t cin, std::size_t cout, std::size_t kh, std::size_t kw, Rng& rng) {
  if (cin == 0 || cout == 0 || kh == 0 || kw == 0) throw ConfigError("conv extents must be positive");
  std::size_t fan_in = cin * kh * kw;
  weight = Tensor::parameter({cout, cin, kh, kw}, kaiming_uniform(cout * fan_in, fan_in, rng));
  bias = Tensor::parameter({cout}, bias_uniform(cout, fan_in, rng));
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
  if (in == 0 || out == 0) throw ConfigError("linear extents must be positive");
  weight = Tensor::parameter({out, in}, kaiming_uniform(out * in, in, rng));
  bias = Tensor::parameter({out}, bias_uniform(out, in, rng));
}

BatchNorm2d::BatchNorm2d(std::size_t channels)
    : gamma(Tensor::parameter({channels}, std::vector<float>(channels, 1.0F))),
      beta(Tensor::parameter({channels}, std::vector<float>(channels, 0.0F))),
      state(channels) {}

}  // namespace nisnn
