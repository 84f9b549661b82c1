#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nisnn/attention.hpp"
#include "nisnn/errors.hpp"
#include "nisnn/ops.hpp"
#include "nisnn/verify.hpp"

using namespace nisnn;

namespace {

constexpr AttentionKind kAll[] = {AttentionKind::kLinearSeq, AttentionKind::kConvSeq, AttentionKind::kLinearChanSeq,
                                  AttentionKind::kConvChanSeq, AttentionKind::kGlobal};

AttentionConfig cfg(AttentionKind kind) {
  AttentionConfig c;
  c.kind = kind;
  c.d1 = 2;
  c.d2 = 3;
  c.d = 2;
  return c;
}

Tensor random_input(Rng& rng, Shape s) {
  std::vector<float> v(shape_numel(s));
  for (float& x : v) x = rng.uniform(-1.0F, 1.0F);
  return Tensor::from_data(s, v);
}

}  // namespace

TEST_CASE("attention kinds round-trip through their names") {
  for (AttentionKind k : kAll) CHECK(parse_attention_kind(to_string(k)) == k);
  CHECK(parse_attention_kind("none") == AttentionKind::kNone);
  CHECK_THROWS_AS(parse_attention_kind("sparse"), ConfigError);
  CHECK(is_residual(AttentionKind::kGlobal));
  CHECK(!is_residual(AttentionKind::kLinearSeq));
}

TEST_CASE("sinusoidal position table") {
  PositionEmbedding pe = sinusoidal_position_embedding(5, 4);
  REQUIRE(pe.table.shape() == Shape{5, 4});
  for (std::size_t s = 0; s < 5; ++s) {
    CHECK(pe.table.at({s, 0}) == doctest::Approx(std::sin(s)));
    CHECK(pe.table.at({s, 1}) == doctest::Approx(std::cos(s)));
    CHECK(pe.table.at({s, 2}) == doctest::Approx(std::sin(s / std::pow(10000.0, 0.5))));
    CHECK(pe.table.at({s, 3}) == doctest::Approx(std::cos(s / std::pow(10000.0, 0.5))));
  }
}

TEST_CASE("every mechanism preserves the feature-map shape and emits stochastic rows") {
  Rng rng(1);
  for (AttentionKind kind : kAll) {
    CAPTURE(to_string(kind));
    Rng init(2);
    Attention att(cfg(kind), 3, 4, 4, init);
    Tensor x = random_input(rng, {2, 3, 4, 4});
    AttentionOutput out = att.forward(x);
    CHECK(out.out.shape() == x.shape());
    const std::size_t cols = out.scores.shape().back();
    for (std::size_t r = 0; r < out.scores.numel() / cols; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += out.scores.data()[r * cols + c];
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("native score shapes") {
  Rng rng(3);
  Tensor x = random_input(rng, {2, 3, 4, 4});
  auto shape_of = [&](AttentionKind kind) {
    Rng init(4);
    return Attention(cfg(kind), 3, 4, 4, init).forward(x).scores.shape();
  };
  CHECK(shape_of(AttentionKind::kLinearSeq) == Shape{2, 2, 4, 4});
  CHECK(shape_of(AttentionKind::kLinearChanSeq) == Shape{2, 3, 2, 4, 4});
  CHECK(shape_of(AttentionKind::kConvSeq) == Shape{2, 4, 4});
  CHECK(shape_of(AttentionKind::kConvChanSeq) == Shape{2, 3, 4, 4});
  CHECK(shape_of(AttentionKind::kGlobal) == Shape{2, 3, 4, 4});
}

TEST_CASE("residual mechanisms start as exact identities") {
  Rng rng(5);
  for (AttentionKind kind : kAll) {
    if (!is_residual(kind)) continue;
    Rng init(6);
    Attention att(cfg(kind), 3, 4, 4, init);
    Tensor x = random_input(rng, {2, 3, 4, 4});
    Tensor y = att.forward(x).out;
    CHECK(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
  }
}

TEST_CASE("zero query projection gives uniform sequence scores") {
  Rng init(7);
  Attention att(cfg(AttentionKind::kConvSeq), 3, 4, 4, init);
  for (float& w : att.q_conv.weight.mutable_data()) w = 0.0F;
  for (float& b : att.q_conv.bias.mutable_data()) b = 0.0F;
  Rng rng(8);
  Tensor s = att.forward(random_input(rng, {1, 3, 4, 4})).scores;
  for (float v : s.data()) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("global attention needs square maps and positive extents") {
  Rng init(9);
  CHECK_THROWS_AS(Attention(cfg(AttentionKind::kGlobal), 3, 4, 6, init), ConfigError);
  CHECK_THROWS_AS(Attention(cfg(AttentionKind::kConvSeq), 0, 4, 4, init), DimensionError);
  AttentionConfig bad = cfg(AttentionKind::kConvSeq);
  bad.d = 0;
  CHECK_THROWS_AS(Attention(bad, 3, 4, 4, init), ConfigError);
  Attention att(cfg(AttentionKind::kConvSeq), 3, 4, 4, init);
  CHECK_THROWS_AS(att.forward(Tensor::zeros({1, 3, 4, 5})), DimensionError);
}

TEST_CASE("parameter sets of the mechanisms") {
  Rng init(10);
  auto names = [&](AttentionKind kind) {
    std::vector<std::string> out;
    for (auto& [n, t] : Attention(cfg(kind), 3, 4, 4, init).parameters()) out.push_back(n);
    return out;
  };
  CHECK(names(AttentionKind::kConvSeq) ==
        std::vector<std::string>{"q_conv.weight", "q_conv.bias", "k_conv.weight", "k_conv.bias", "alpha"});
  CHECK(names(AttentionKind::kLinearSeq).size() == 8);
  Attention g(cfg(AttentionKind::kGlobal), 3, 4, 4, init);
  CHECK(g.q_conv.weight.shape() == Shape{6, 3, 1, 1});
}

TEST_CASE("mechanisms differentiate correctly w.r.t. input and parameters") {
  Rng rng(11);
  for (AttentionKind kind : kAll) {
    CAPTURE(to_string(kind));
    Rng init(12);
    auto att = std::make_shared<Attention>(cfg(kind), 3, 4, 4, init);
    if (is_residual(kind)) att->alpha().mutable_data()[0] = 0.7F;
    Tensor x = random_input(rng, {2, 3, 4, 4});
    x.set_requires_grad(true);
    std::vector<Tensor> inputs{x};
    for (auto& [n, t] : att->parameters()) inputs.push_back(t);
    CHECK(fd_relative_error([att](const auto& in) { return att->forward(in[0]).out; }, inputs, 13) < 1e-3);
  }
}
