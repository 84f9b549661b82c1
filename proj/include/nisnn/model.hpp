#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nisnn/attention.hpp"
#include "nisnn/lif.hpp"
#include "nisnn/nn.hpp"
#include "nisnn/tensor.hpp"

namespace nisnn {

enum class Family { kSnn, kCnn };

std::string_view to_string(Family family);
Family parse_family(std::string_view name);

/// Declarative description of the two-stage residual network.
struct NetworkSpec {
  Family family = Family::kSnn;
  std::size_t channels = 20;    // C
  std::size_t timepieces = 20;  // S
  std::size_t steps = 20;       // T, samples per timepiece
  AttentionConfig attention{};
  double tau = 2.0;
  double delta_t = 1.0;
  double v_th = 0.5;
  std::size_t encoder_kernel = 5;     // conv1 kernel is (1, encoder_kernel)
  std::size_t classifier_kernel = 10; // conv2 kernel is square
  std::size_t hidden = 20;
  std::size_t classes = 2;

  /// Throws ConfigError when the extents cannot flow through the network.
  void validate() const;
  /// Same architecture (everything except the family tag).
  bool same_architecture(const NetworkSpec& other) const;
};

/// Cost designation of a weighted layer.
enum class OpClass { kMacConv, kMacFc, kAcConv, kAcFc };
std::string_view to_string(OpClass c);

/// Static description of one weighted layer, enough to count its operations.
struct LayerInfo {
  std::string name;
  OpClass op_class = OpClass::kMacConv;
  // conv: kernel (k0,k1), output map (h,w), channels; fc: in -> out
  std::size_t k0 = 0, k1 = 0, h = 0, w = 0, c_out = 0, c_in = 0;
  std::size_t in = 0, out = 0;
};

/// Intermediate tensors captured during a forward pass.
struct ForwardTrace {
  Tensor encoder_spikes;  // SNN: output of the first spiking layer [B,C,S,T]
  Tensor ac_conv_input;   // input of conv2 [B,C,S/2,T/2]
  Tensor ac_fc_input;     // input of fc1 [B, C*S/4*T/4]
  Tensor attention_scores;
};

/// A named float buffer that is part of the model state but not trained.
struct NamedBuffer {
  std::string name;
  std::vector<float>* values;
};

class Model {
 public:
  Model() = default;

  const NetworkSpec& spec() const { return spec_; }
  Family family() const { return spec_.family; }

  /// logits [B, classes]. `trace`, when given, receives intermediates.
  Tensor forward(const Tensor& x, Mode mode, ForwardTrace* trace = nullptr);

  /// Trainable tensors in a fixed order.
  NamedTensors parameters() const;
  /// Batch-norm running statistics.
  std::vector<NamedBuffer> buffers();
  /// Weighted layers in forward order with their cost designation.
  std::vector<LayerInfo> layers() const;
  std::size_t parameter_count() const;

  Conv2d conv1, conv2;
  Attention attention;
  Linear fc1, fc2;
  BatchNorm2d bn1, bn2;     // CNN family
  NiLifLayer lif1, lif2;    // SNN family

 private:
  friend Model build_snn(const NetworkSpec& spec, std::uint64_t seed);
  friend Model build_cnn(const NetworkSpec& spec, std::uint64_t seed);
  void init_common(const NetworkSpec& spec, Rng& rng);

  NetworkSpec spec_;
};

Model build_snn(const NetworkSpec& spec, std::uint64_t seed);
Model build_cnn(const NetworkSpec& spec, std::uint64_t seed);
/// Dispatches on spec.family.
Model build_model(const NetworkSpec& spec, std::uint64_t seed);

/// Copies conv, attention and linear parameters positionally and maps the
/// CNN batch-norm affine parameters and running statistics onto the SNN's
/// membrane batch-norm slots. Throws TransferError naming the first layer
/// whose shape or kind does not match.
void transfer_weights_cnn_to_snn(const Model& cnn, Model& snn);

}  // namespace nisnn
