#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "nisnn/nn.hpp"
#include "nisnn/tensor.hpp"

namespace nisnn {

enum class AttentionKind { kNone, kLinearSeq, kConvSeq, kLinearChanSeq, kConvChanSeq, kGlobal };

std::string_view to_string(AttentionKind kind);
/// Accepts "none", "linear-seq", "conv-seq", "linear-chanseq", "conv-chanseq", "global".
AttentionKind parse_attention_kind(std::string_view name);
bool is_residual(AttentionKind kind);

struct AttentionConfig {
  AttentionKind kind = AttentionKind::kGlobal;
  std::size_t d1 = 6;   // head-like extent of the linear mechanisms
  std::size_t d2 = 20;  // projected extent of the linear mechanisms
  std::size_t d = 8;    // channel expansion of the convolutional q/k projections
  float alpha_init = 0.0F;
};

/// Fixed sinusoidal table [positions, features]:
/// even feature 2i -> sin(s / 10000^(2i/F)), odd feature 2i+1 -> cos(same).
struct PositionEmbedding {
  Tensor table;
};

PositionEmbedding sinusoidal_position_embedding(std::size_t positions, std::size_t features);

struct AttentionOutput {
  Tensor out;     // [B,C,S,T]
  Tensor scores;  // softmax scores in the mechanism's native shape
};

/// One attention mechanism over [B,C,S,T] feature maps, S timepieces of T
/// steps each.
///
///  - linear-seq:     timepieces attend over (C*T) features, scores [B,d1,S,S]
///  - linear-chanseq: per channel, scores [B,C,d1,S,S]
///  - conv-seq:       1x1-conv q/k, scores [B,S,S], out = alpha * A x + x
///  - conv-chanseq:   per channel, scores [B,C,S,S], out = alpha * A x + x
///  - global:         q [B,C,S,dT], k [B,C,T,dS], scores [B,C,S,T],
///                    out = alpha * (A .* x) + x; needs S == T
///
/// The conv projections map C channels to d*C with a 1x1 kernel; output
/// channel c*d + e is expansion e of channel c.
class Attention {
 public:
  Attention() = default;
  Attention(const AttentionConfig& cfg, std::size_t channels, std::size_t timepieces, std::size_t steps, Rng& rng);

  AttentionOutput forward(const Tensor& x) const;

  const AttentionConfig& config() const { return cfg_; }
  NamedTensors parameters() const;
  Tensor& alpha() { return alpha_; }

  std::size_t channels() const { return channels_; }
  std::size_t timepieces() const { return timepieces_; }
  std::size_t steps() const { return steps_; }

  // Projections, exposed for tests that pin specific weights.
  Linear q_fc, k_fc, v_fc, out_fc;
  Conv2d q_conv, k_conv;

 private:
  AttentionOutput linear_seq(const Tensor& x) const;
  AttentionOutput linear_chanseq(const Tensor& x) const;
  AttentionOutput conv_seq(const Tensor& x) const;
  AttentionOutput conv_chanseq(const Tensor& x) const;
  AttentionOutput global(const Tensor& x) const;

  AttentionConfig cfg_;
  std::size_t channels_ = 0;
  std::size_t timepieces_ = 0;
  std::size_t steps_ = 0;
  Tensor alpha_;
  PositionEmbedding position_;
};

}  // namespace nisnn
