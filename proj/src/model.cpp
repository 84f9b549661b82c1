#include "nisnn/model.hpp"

#include <algorithm>

#include "nisnn/errors.hpp"
#include "nisnn/ops.hpp"

namespace nisnn {

std::string_view to_string(Family family) { return family == Family::kSnn ? "snn" : "cnn"; }

Family parse_family(std::string_view name) {
  if (name == "snn") return Family::kSnn;
  if (name == "cnn") return Family::kCnn;
  throw ConfigError("unknown network family '" + std::string(name) + "' (expected snn or cnn)");
}

std::string_view to_string(OpClass c) {
  switch (c) {
    case OpClass::kMacConv: return "MAC-conv";
    case OpClass::kMacFc: return "MAC-fc";
    case OpClass::kAcConv: return "AC-conv";
    case OpClass::kAcFc: return "AC-fc";
  }
  return "MAC-conv";
}

void NetworkSpec::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("network.") + name + " must be positive");
  };
  positive(channels, "channels");
  positive(timepieces, "timepieces");
  positive(steps, "steps");
  positive(encoder_kernel, "encoder_kernel");
  positive(classifier_kernel, "classifier_kernel");
  positive(hidden, "hidden");
  positive(classes, "classes");
  if (timepieces % 4 != 0 || steps % 4 != 0) {
    throw ConfigError("network.timepieces and network.steps must be multiples of 4 (two 2x2 poolings), got S=" +
                      std::to_string(timepieces) + " T=" + std::to_string(steps));
  }
  if (attention.kind == AttentionKind::kGlobal && timepieces != steps) {
    throw ConfigError("global attention needs S/2 == T/2 at its insertion point, got S=" +
                      std::to_string(timepieces) + " T=" + std::to_string(steps));
  }
  if (attention.d1 == 0 || attention.d2 == 0 || attention.d == 0) {
    throw ConfigError("attention d1, d2 and d must be positive");
  }
  if (!(tau > 0.0) || !(delta_t > 0.0) || !(v_th > 0.0)) {
    throw ConfigError("network.tau, network.delta_t and network.v_th must be positive");
  }
}

bool NetworkSpec::same_architecture(const NetworkSpec& o) const {
  return channels == o.channels && timepieces == o.timepieces && steps == o.steps &&
         attention.kind == o.attention.kind && attention.d1 == o.attention.d1 && attention.d2 == o.attention.d2 &&
         attention.d == o.attention.d && encoder_kernel == o.encoder_kernel &&
         classifier_kernel == o.classifier_kernel && hidden == o.hidden && classes == o.classes;
}

void Model::init_common(const NetworkSpec& spec, Rng& rng) {
  spec.validate();
  spec_ = spec;
  const std::size_t c = spec.channels;
  conv1 = Conv2d(c, c, 1, spec.encoder_kernel, rng);
  conv2 = Conv2d(c, c, spec.classifier_kernel, spec.classifier_kernel, rng);
  attention = Attention(spec.attention, c, spec.timepieces / 2, spec.steps / 2, rng);
  fc1 = Linear(c * (spec.timepieces / 4) * (spec.steps / 4), spec.hidden, rng);
  fc2 = Linear(spec.hidden, spec.classes, rng);
}

Model build_snn(const NetworkSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  Model m;
  NetworkSpec s = spec;
  s.family = Family::kSnn;
  m.init_common(s, rng);
  m.lif1 = NiLifLayer(build_leaky_kernel(s.tau, s.delta_t, s.v_th, s.steps - 1), s.channels);
  m.lif2 = NiLifLayer(build_leaky_kernel(s.tau, s.delta_t, s.v_th, s.steps / 2 - 1), s.channels);
  return m;
}

Model build_cnn(const NetworkSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  Model m;
  NetworkSpec s = spec;
  s.family = Family::kCnn;
  m.init_common(s, rng);
  m.bn1 = BatchNorm2d(s.channels);
  m.bn2 = BatchNorm2d(s.channels);
  return m;
}

Model build_model(const NetworkSpec& spec, std::uint64_t seed) {
  return spec.family == Family::kSnn ? build_snn(spec, seed) : build_cnn(spec, seed);
}

Tensor Model::forward(const Tensor& x, Mode mode, ForwardTrace* trace) {
  if (x.rank() != 4 || x.dim(1) != spec_.channels || x.dim(2) != spec_.timepieces || x.dim(3) != spec_.steps) {
    throw DimensionError("model expects [B," + std::to_string(spec_.channels) + "," +
                         std::to_string(spec_.timepieces) + "," + std::to_string(spec_.steps) + "], got " +
                         shape_str(x.shape()));
  }
  const bool snn = spec_.family == Family::kSnn;
  Tensor residual = snn ? max_pool2d(x) : avg_pool2d(x);

  Tensor h = conv1.forward(x);
  if (snn) {
    h = lif1.forward(h, mode).spikes;
    if (trace) trace->encoder_spikes = h;
    h = max_pool2d(h);
  } else {
    h = avg_pool2d(relu(bn1.forward(h, mode)));
  }
  if (trace) trace->ac_conv_input = h;

  h = conv2.forward(h);
  AttentionOutput att = attention.forward(h);
  if (trace) trace->attention_scores = att.scores;
  h = add(att.out, residual);

  if (snn) {
    h = max_pool2d(lif2.forward(h, mode).spikes);
  } else {
    h = avg_pool2d(relu(bn2.forward(h, mode)));
  }
  h = reshape(h, {x.dim(0), h.numel() / x.dim(0)});
  if (trace) trace->ac_fc_input = h;
  return fc2.forward(fc1.forward(h));
}

NamedTensors Model::parameters() const {
  NamedTensors p;
  auto push = [&p](const std::string& name, const Tensor& t) {
    if (t.defined()) p.emplace_back(name, t);
  };
  auto norm = [&](const std::string& name, std::size_t index) {
    if (spec_.family == Family::kSnn) {
      const NiLifLayer& lif = index == 1 ? lif1 : lif2;
      push(name + ".gamma", lif.gamma());
      push(name + ".beta", lif.beta());
    } else {
      const BatchNorm2d& bn = index == 1 ? bn1 : bn2;
      push(name + ".gamma", bn.gamma);
      push(name + ".beta", bn.beta);
    }
  };
  push("conv1.weight", conv1.weight);
  push("conv1.bias", conv1.bias);
  norm("norm1", 1);
  push("conv2.weight", conv2.weight);
  push("conv2.bias", conv2.bias);
  for (auto& [name, t] : attention.parameters()) push("attention." + name, t);
  norm("norm2", 2);
  push("fc1.weight", fc1.weight);
  push("fc1.bias", fc1.bias);
  push("fc2.weight", fc2.weight);
  push("fc2.bias", fc2.bias);
  return p;
}

std::vector<NamedBuffer> Model::buffers() {
  BatchNormState& s1 = spec_.family == Family::kSnn ? lif1.bn_state() : bn1.state;
  BatchNormState& s2 = spec_.family == Family::kSnn ? lif2.bn_state() : bn2.state;
  return {{"norm1.running_mean", &s1.running_mean},
          {"norm1.running_var", &s1.running_var},
          {"norm2.running_mean", &s2.running_mean},
          {"norm2.running_var", &s2.running_var}};
}

std::vector<LayerInfo> Model::layers() const {
  const bool snn = spec_.family == Family::kSnn;
  const std::size_t c = spec_.channels;
  const std::size_t s = spec_.timepieces;
  const std::size_t t = spec_.steps;
  std::vector<LayerInfo> out;
  LayerInfo l1{"conv1", OpClass::kMacConv, 1, spec_.encoder_kernel, s, t, c, c, 0, 0};
  LayerInfo l2{"conv2", snn ? OpClass::kAcConv : OpClass::kMacConv, spec_.classifier_kernel,
               spec_.classifier_kernel, s / 2, t / 2, c, c, 0, 0};
  LayerInfo l3{"fc1", snn ? OpClass::kAcFc : OpClass::kMacFc, 0, 0, 0, 0, 0, 0, c * (s / 4) * (t / 4),
               spec_.hidden};
  LayerInfo l4{"fc2", OpClass::kMacFc, 0, 0, 0, 0, 0, 0, spec_.hidden, spec_.classes};
  return {l1, l2, l3, l4};
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t.numel();
  return n;
}

namespace {

std::string layer_of(const std::string& name) {
  auto dot = name.rfind('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

}  // namespace

void transfer_weights_cnn_to_snn(const Model& cnn, Model& snn) {
  if (cnn.family() != Family::kCnn || snn.family() != Family::kSnn) {
    throw TransferError("transfer needs a cnn source and an snn target");
  }
  NamedTensors src = cnn.parameters();
  NamedTensors dst = snn.parameters();
  std::size_t n = std::max(src.size(), dst.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= src.size() || i >= dst.size()) {
      throw TransferError("layer '" + layer_of(i < dst.size() ? dst[i].first : src[i].first) +
                          "' has no counterpart");
    }
    if (src[i].first != dst[i].first || src[i].second.shape() != dst[i].second.shape()) {
      throw TransferError("layer '" + layer_of(dst[i].first) + "' does not match source '" +
                          layer_of(src[i].first) + "' " + shape_str(src[i].second.shape()) + " vs " +
                          shape_str(dst[i].second.shape()));
    }
  }
  if (!cnn.spec().same_architecture(snn.spec())) throw TransferError("layer 'network' specs differ");
  for (std::size_t i = 0; i < n; ++i) {
    auto from = src[i].second.data();
    auto to = dst[i].second.mutable_data();
    std::copy(from.begin(), from.end(), to.begin());
  }
  for (auto [from, to] : {std::pair{&cnn.bn1.state, &snn.lif1.bn_state()}, std::pair{&cnn.bn2.state, &snn.lif2.bn_state()}}) {
    to->running_mean = from->running_mean;
    to->running_var = from->running_var;
  }
}

}  // namespace nisnn
