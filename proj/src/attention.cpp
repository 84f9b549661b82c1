#include "nisnn/attention.hpp"

#include <cmath>

#include "nisnn/errors.hpp"
#include "nisnn/ops.hpp"

namespace nisnn {

std::string_view to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::kNone: return "none";
    case AttentionKind::kLinearSeq: return "linear-seq";
    case AttentionKind::kConvSeq: return "conv-seq";
    case AttentionKind::kLinearChanSeq: return "linear-chanseq";
    case AttentionKind::kConvChanSeq: return "conv-chanseq";
    case AttentionKind::kGlobal: return "global";
  }
  return "none";
}

AttentionKind parse_attention_kind(std::string_view name) {
  for (auto kind : {AttentionKind::kNone, AttentionKind::kLinearSeq, AttentionKind::kConvSeq,
                    AttentionKind::kLinearChanSeq, AttentionKind::kConvChanSeq, AttentionKind::kGlobal}) {
    if (to_string(kind) == name) return kind;
  }
  throw ConfigError("unknown attention kind '" + std::string(name) + "'");
}

bool is_residual(AttentionKind kind) {
  return kind == AttentionKind::kConvSeq || kind == AttentionKind::kConvChanSeq || kind == AttentionKind::kGlobal;
}

PositionEmbedding sinusoidal_position_embedding(std::size_t positions, std::size_t features) {
  if (positions == 0 || features == 0) throw DimensionError("position embedding extents must be positive");
  std::vector<float> table(positions * features);
  for (std::size_t s = 0; s < positions; ++s) {
    for (std::size_t f = 0; f < features; ++f) {
      double pair = static_cast<double>(f - f % 2);
      double angle = static_cast<double>(s) / std::pow(10000.0, pair / static_cast<double>(features));
      table[s * features + f] = static_cast<float>(f % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return {Tensor::from_data({positions, features}, std::move(table))};
}

Attention::Attention(const AttentionConfig& cfg, std::size_t channels, std::size_t timepieces, std::size_t steps,
                     Rng& rng)
    : cfg_(cfg), channels_(channels), timepieces_(timepieces), steps_(steps) {
  if (channels == 0 || timepieces == 0 || steps == 0) {
    throw DimensionError("attention extents must be positive");
  }
  if (cfg.d1 == 0 || cfg.d2 == 0 || cfg.d == 0) throw ConfigError("attention d1, d2 and d must be positive");
  const std::size_t c = channels;
  const std::size_t t = steps;
  const std::size_t heads = cfg.d1 * cfg.d2;
  switch (cfg.kind) {
    case AttentionKind::kNone:
      break;
    case AttentionKind::kLinearSeq:
      q_fc = Linear(c * t, heads, rng);
      k_fc = Linear(c * t, heads, rng);
      v_fc = Linear(c * t, heads, rng);
      out_fc = Linear(heads, c * t, rng);
      position_ = sinusoidal_position_embedding(timepieces, c * t);
      break;
    case AttentionKind::kLinearChanSeq:
      q_fc = Linear(t, heads, rng);
      k_fc = Linear(t, heads, rng);
      v_fc = Linear(t, heads, rng);
      out_fc = Linear(heads, t, rng);
      position_ = sinusoidal_position_embedding(timepieces, t);
      break;
    case AttentionKind::kGlobal:
      if (timepieces != steps) {
        throw ConfigError("global attention needs S == T, got S=" + std::to_string(timepieces) +
                          " T=" + std::to_string(steps));
      }
      [[fallthrough]];
    case AttentionKind::kConvSeq:
    case AttentionKind::kConvChanSeq:
      q_conv = Conv2d(c, cfg.d * c, 1, 1, rng);
      k_conv = Conv2d(c, cfg.d * c, 1, 1, rng);
      alpha_ = Tensor::parameter({1}, {cfg.alpha_init});
      break;
  }
}

NamedTensors Attention::parameters() const {
  NamedTensors p;
  switch (cfg_.kind) {
    case AttentionKind::kNone:
      break;
    case AttentionKind::kLinearSeq:
    case AttentionKind::kLinearChanSeq:
      p = {{"q_fc.weight", q_fc.weight}, {"q_fc.bias", q_fc.bias},   {"k_fc.weight", k_fc.weight},
           {"k_fc.bias", k_fc.bias},     {"v_fc.weight", v_fc.weight}, {"v_fc.bias", v_fc.bias},
           {"out_fc.weight", out_fc.weight}, {"out_fc.bias", out_fc.bias}};
      break;
    case AttentionKind::kConvSeq:
    case AttentionKind::kConvChanSeq:
    case AttentionKind::kGlobal:
      p = {{"q_conv.weight", q_conv.weight},
           {"q_conv.bias", q_conv.bias},
           {"k_conv.weight", k_conv.weight},
           {"k_conv.bias", k_conv.bias},
           {"alpha", alpha_}};
      break;
  }
  return p;
}

AttentionOutput Attention::forward(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != channels_ || x.dim(2) != timepieces_ || x.dim(3) != steps_) {
    throw DimensionError("attention expects [B," + std::to_string(channels_) + "," + std::to_string(timepieces_) +
                         "," + std::to_string(steps_) + "], got " + shape_str(x.shape()));
  }
  switch (cfg_.kind) {
    case AttentionKind::kNone: return {x, Tensor()};
    case AttentionKind::kLinearSeq: return linear_seq(x);
    case AttentionKind::kLinearChanSeq: return linear_chanseq(x);
    case AttentionKind::kConvSeq: return conv_seq(x);
    case AttentionKind::kConvChanSeq: return conv_chanseq(x);
    case AttentionKind::kGlobal: return global(x);
  }
  return {x, Tensor()};
}

AttentionOutput Attention::linear_seq(const Tensor& x) const {
  const std::size_t b = x.dim(0);
  const std::size_t c = channels_;
  const std::size_t s = timepieces_;
  const std::size_t t = steps_;
  const std::size_t d1 = cfg_.d1;
  const std::size_t d2 = cfg_.d2;
  // [B,C,S,T] -> [B,S,C*T]
  Tensor seq = reshape(permute(x, {0, 2, 1, 3}), {b, s, c * t});
  Tensor embedded = add(seq, position_.table);
  auto project = [&](const Linear& fc) {
    return permute(reshape(fc.forward(embedded), {b, s, d1, d2}), {0, 2, 1, 3});  // [B,d1,S,d2]
  };
  Tensor q = project(q_fc);
  Tensor k = project(k_fc);
  Tensor v = project(v_fc);
  Tensor scores = softmax_lastdim(scale(matmul(q, transpose_last2(k)), 1.0F / std::sqrt(static_cast<float>(d2))));
  Tensor mixed = reshape(permute(matmul(scores, v), {0, 2, 1, 3}), {b, s, d1 * d2});
  Tensor out = permute(reshape(out_fc.forward(mixed), {b, s, c, t}), {0, 2, 1, 3});
  return {out, scores};
}

AttentionOutput Attention::linear_chanseq(const Tensor& x) const {
  const std::size_t b = x.dim(0);
  const std::size_t c = channels_;
  const std::size_t s = timepieces_;
  const std::size_t d1 = cfg_.d1;
  const std::size_t d2 = cfg_.d2;
  Tensor embedded = add(x, position_.table);
  auto project = [&](const Linear& fc) {
    return permute(reshape(fc.forward(embedded), {b, c, s, d1, d2}), {0, 1, 3, 2, 4});  // [B,C,d1,S,d2]
  };
  Tensor q = project(q_fc);
  Tensor k = project(k_fc);
  Tensor v = project(v_fc);
  Tensor scores = softmax_lastdim(scale(matmul(q, transpose_last2(k)), 1.0F / std::sqrt(static_cast<float>(d2))));
  Tensor mixed = reshape(permute(matmul(scores, v), {0, 1, 3, 2, 4}), {b, c, s, d1 * d2});
  Tensor out = out_fc.forward(mixed);  // [B,C,S,T]
  return {out, scores};
}

AttentionOutput Attention::conv_seq(const Tensor& x) const {
  const std::size_t b = x.dim(0);
  const std::size_t c = channels_;
  const std::size_t s = timepieces_;
  const std::size_t t = steps_;
  const std::size_t dc = cfg_.d * c;
  auto project = [&](const Conv2d& conv) {
    return reshape(permute(conv.forward(x), {0, 2, 1, 3}), {b, s, dc * t});  // [B,S,dCT]
  };
  Tensor q = project(q_conv);
  Tensor k = project(k_conv);
  Tensor scores = softmax_lastdim(matmul(q, transpose_last2(k)));  // [B,S,S]
  Tensor seq = reshape(permute(x, {0, 2, 1, 3}), {b, s, c * t});
  Tensor mixed = permute(reshape(matmul(scores, seq), {b, s, c, t}), {0, 2, 1, 3});
  return {add(x, mul(alpha_, mixed)), scores};
}

AttentionOutput Attention::conv_chanseq(const Tensor& x) const {
  const std::size_t b = x.dim(0);
  const std::size_t c = channels_;
  const std::size_t s = timepieces_;
  const std::size_t t = steps_;
  const std::size_t d = cfg_.d;
  auto project = [&](const Conv2d& conv) {
    // [B,C*d,S,T] -> [B,C,d,S,T] -> [B,C,S,d,T] -> [B,C,S,d*T]
    return reshape(permute(reshape(conv.forward(x), {b, c, d, s, t}), {0, 1, 3, 2, 4}), {b, c, s, d * t});
  };
  Tensor q = project(q_conv);
  Tensor k = project(k_conv);
  Tensor scores = softmax_lastdim(matmul(q, transpose_last2(k)));  // [B,C,S,S]
  Tensor mixed = matmul(scores, x);
  return {add(x, mul(alpha_, mixed)), scores};
}

AttentionOutput Attention::global(const Tensor& x) const {
  const std::size_t b = x.dim(0);
  const std::size_t c = channels_;
  const std::size_t s = timepieces_;
  const std::size_t t = steps_;
  const std::size_t d = cfg_.d;
  Tensor q = reshape(permute(reshape(q_conv.forward(x), {b, c, d, s, t}), {0, 1, 3, 2, 4}), {b, c, s, d * t});
  // [B,C,d,S,T] -> [B,C,T,d,S] -> [B,C,T,d*S]
  Tensor k = reshape(permute(reshape(k_conv.forward(x), {b, c, d, s, t}), {0, 1, 4, 2, 3}), {b, c, t, d * s});
  Tensor scores = softmax_lastdim(matmul(q, transpose_last2(k)));  // [B,C,S,T]
  Tensor mixed = mul(scores, x);
  return {add(x, mul(alpha_, mixed)), scores};
}

}  // namespace nisnn
