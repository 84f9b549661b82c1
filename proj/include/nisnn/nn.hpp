#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "nisnn/ops.hpp"
#include "nisnn/tensor.hpp"

namespace nisnn {

/// Seeded generator. Draws are derived from raw 64-bit engine output so the
/// streams do not depend on the standard library's distribution classes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 24 bits of precision.
  float uniform() { return static_cast<float>(engine_() >> 40) * (1.0F / 16777216.0F); }
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform_double() { return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0); }
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

/// Mixes a seed with a stream id so independent consumers get unrelated
/// sequences from one run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

std::vector<float> kaiming_uniform(std::size_t count, std::size_t fan_in, Rng& rng);
std::vector<float> bias_uniform(std::size_t count, std::size_t fan_in, Rng& rng);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct Conv2d {
  Tensor weight;  // [cout, cin, kh, kw]
  Tensor bias;    // [cout]

  Conv2d() = default;
  Conv2d(std::size_t cin, std::size_t cout, std::size_t kh, std::size_t kw, Rng& rng);
  Tensor forward(const Tensor& x) const { return conv2d_same(x, weight, bias); }
};

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
};

struct BatchNorm2d {
  Tensor gamma;
  Tensor beta;
  BatchNormState state;

  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels);
  Tensor forward(const Tensor& x, Mode mode) { return batchnorm(x, gamma, beta, state, mode); }
};

}  // namespace nisnn
