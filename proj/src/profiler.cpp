#include "nisnn/profiler.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "nisnn/errors.hpp"

namespace nisnn {

namespace {

std::uint64_t checked_product(std::initializer_list<std::uint64_t> factors) {
  std::uint64_t p = 1;
  for (std::uint64_t f : factors) {
    if (f == 0) throw ConfigError("operation counts need positive extents");
    if (p > UINT64_MAX / f) throw ConfigError("operation count overflows 64 bits");
    p *= f;
  }
  return p;
}

constexpr CostClass kAllClasses[] = {CostClass::kMacConv, CostClass::kMacFc,  CostClass::kMacMatmul,
                                     CostClass::kAcConv,  CostClass::kAcFc, CostClass::kNeuronOverhead};

}  // namespace

std::uint64_t flops_conv(std::uint64_t k0, std::uint64_t k1, std::uint64_t h, std::uint64_t w, std::uint64_t c_out,
                         std::uint64_t c_in) {
  return checked_product({k0, k1, h, w, c_out, c_in});
}

std::uint64_t flops_fc(std::uint64_t in, std::uint64_t out) { return checked_product({in, out}); }

std::uint64_t flops_mm(std::uint64_t m1, std::uint64_t n, std::uint64_t m2) { return checked_product({m1, n, m2}); }

std::string_view to_string(CostClass c) {
  switch (c) {
    case CostClass::kMacConv: return "MAC-conv";
    case CostClass::kMacFc: return "MAC-fc";
    case CostClass::kMacMatmul: return "MAC-matmul";
    case CostClass::kAcConv: return "AC-conv";
    case CostClass::kAcFc: return "AC-fc";
    case CostClass::kNeuronOverhead: return "neuron-overhead";
  }
  return "MAC-conv";
}

CostClass parse_cost_class(std::string_view name) {
  for (CostClass c : kAllClasses) {
    if (to_string(c) == name) return c;
  }
  throw ConfigError("unknown cost class '" + std::string(name) + "'");
}

bool is_ac(CostClass c) { return c == CostClass::kAcConv || c == CostClass::kAcFc; }

double LayerCost::effective() const {
  auto s = static_cast<double>(flops);
  return is_ac(cost_class) && rate ? s * *rate : s;
}

std::uint64_t CostReport::mac_total() const {
  std::uint64_t n = 0;
  for (const auto& l : layers) {
    if (!is_ac(l.cost_class)) n += l.flops;
  }
  return n;
}

std::uint64_t CostReport::ac_static_total() const {
  std::uint64_t n = 0;
  for (const auto& l : layers) {
    if (is_ac(l.cost_class)) n += l.flops;
  }
  return n;
}

double CostReport::ac_effective_total() const {
  double n = 0.0;
  for (const auto& l : layers) {
    if (is_ac(l.cost_class)) n += l.effective();
  }
  return n;
}

std::uint64_t CostReport::uncounted_total() const {
  std::uint64_t n = 0;
  for (const auto& l : layers) n += l.uncounted;
  return n;
}

std::uint64_t CostReport::static_of(std::string_view layer) const {
  for (const auto& l : layers) {
    if (l.name == layer) return l.flops;
  }
  throw ContractError("report has no layer '" + std::string(layer) + "'");
}

double CostReport::energy_joules() const {
  return nisnn::energy_joules(energy, static_cast<double>(mac_total()), ac_effective_total());
}

double energy_joules(const EnergyModel& e, double macs, double ac_effective) {
  return e.mac_joules * macs + e.ac_joules * ac_effective;
}

std::vector<LayerCost> attention_costs(const AttentionConfig& cfg, std::size_t c, std::size_t s, std::size_t t) {
  const std::uint64_t heads = cfg.d1 * cfg.d2;
  const std::uint64_t d = cfg.d;
  std::vector<LayerCost> out;
  auto add = [&out](std::string name, CostClass cls, std::uint64_t flops, std::uint64_t uncounted) {
    out.push_back({"attention." + std::move(name), cls, flops, std::nullopt, uncounted});
  };
  switch (cfg.kind) {
    case AttentionKind::kNone:
      break;
    case AttentionKind::kLinearSeq:
      for (const char* n : {"q_fc", "k_fc", "v_fc"}) add(n, CostClass::kMacFc, s * flops_fc(c * t, heads), s * heads);
      add("scores", CostClass::kMacMatmul, cfg.d1 * flops_mm(s, cfg.d2, s), 3 * cfg.d1 * s * s);
      add("mix", CostClass::kMacMatmul, cfg.d1 * flops_mm(s, s, cfg.d2), 0);
      add("out_fc", CostClass::kMacFc, s * flops_fc(heads, c * t), s * c * t);
      break;
    case AttentionKind::kLinearChanSeq:
      for (const char* n : {"q_fc", "k_fc", "v_fc"}) {
        add(n, CostClass::kMacFc, c * s * flops_fc(t, heads), c * s * heads);
      }
      add("scores", CostClass::kMacMatmul, c * cfg.d1 * flops_mm(s, cfg.d2, s), 3 * c * cfg.d1 * s * s);
      add("mix", CostClass::kMacMatmul, c * cfg.d1 * flops_mm(s, s, cfg.d2), 0);
      add("out_fc", CostClass::kMacFc, c * s * flops_fc(heads, t), c * s * t);
      break;
    case AttentionKind::kConvSeq:
      for (const char* n : {"q_conv", "k_conv"}) add(n, CostClass::kMacConv, flops_conv(1, 1, s, t, d * c, c), d * c * s * t);
      add("scores", CostClass::kMacMatmul, flops_mm(s, d * c * t, s), 3 * s * s);
      add("mix", CostClass::kMacMatmul, flops_mm(s, s, c * t), 2 * c * s * t);
      break;
    case AttentionKind::kConvChanSeq:
      for (const char* n : {"q_conv", "k_conv"}) add(n, CostClass::kMacConv, flops_conv(1, 1, s, t, d * c, c), d * c * s * t);
      add("scores", CostClass::kMacMatmul, c * flops_mm(s, d * t, s), 3 * c * s * s);
      add("mix", CostClass::kMacMatmul, c * flops_mm(s, s, t), 2 * c * s * t);
      break;
    case AttentionKind::kGlobal:
      for (const char* n : {"q_conv", "k_conv"}) add(n, CostClass::kMacConv, flops_conv(1, 1, s, t, d * c, c), d * c * s * t);
      add("scores", CostClass::kMacMatmul, c * flops_mm(s, d * t, t), 3 * c * s * t);
      // A .* x, alpha scaling and the residual add are elementwise
      add("mix", CostClass::kMacMatmul, 0, 3 * c * s * t);
      break;
  }
  return out;
}

CostReport profile_static(const Model& model) {
  const NetworkSpec& spec = model.spec();
  const bool snn = spec.family == Family::kSnn;
  CostReport r;
  r.model = std::string(to_string(spec.family)) + "/" + std::string(to_string(spec.attention.kind));
  auto neuron_overhead = [&](const char* name, std::size_t neurons, std::size_t steps) {
    // two (1 x T)(T x T) products per neuron; subtraction and two thresholdings uncounted
    r.layers.push_back({name, CostClass::kNeuronOverhead, 2 * neurons * flops_mm(1, steps, steps), std::nullopt,
                        3 * neurons * steps});
  };
  for (const LayerInfo& l : model.layers()) {
    LayerCost cost;
    cost.name = l.name;
    switch (l.op_class) {
      case OpClass::kMacConv: cost.cost_class = CostClass::kMacConv; break;
      case OpClass::kAcConv: cost.cost_class = CostClass::kAcConv; break;
      case OpClass::kMacFc: cost.cost_class = CostClass::kMacFc; break;
      case OpClass::kAcFc: cost.cost_class = CostClass::kAcFc; break;
    }
    if (l.op_class == OpClass::kMacConv || l.op_class == OpClass::kAcConv) {
      cost.flops = flops_conv(l.k0, l.k1, l.h, l.w, l.c_out, l.c_in);
      cost.uncounted = l.c_out * l.h * l.w;
    } else {
      cost.flops = flops_fc(l.in, l.out);
      cost.uncounted = l.out;
    }
    r.layers.push_back(cost);
    if (l.name == "conv1" && snn) neuron_overhead("lif1", spec.channels * spec.timepieces, spec.steps);
    if (l.name == "conv2") {
      for (auto& a : attention_costs(spec.attention, spec.channels, spec.timepieces / 2, spec.steps / 2)) {
        r.layers.push_back(std::move(a));
      }
      if (snn) neuron_overhead("lif2", spec.channels * spec.timepieces / 2, spec.steps / 2);
    }
  }
  return r;
}

SpikeRates measure_spike_rates(Model& model, std::span<const Tensor> batches) {
  if (batches.empty()) throw ContractError("spike-rate measurement needs at least one batch");
  NoGradScope no_grad;
  double conv_sum = 0.0;
  double fc_sum = 0.0;
  std::size_t conv_n = 0;
  std::size_t fc_n = 0;
  for (const Tensor& batch : batches) {
    ForwardTrace trace;
    model.forward(batch, Mode::kInfer, &trace);
    for (float v : trace.ac_conv_input.data()) conv_sum += v;
    for (float v : trace.ac_fc_input.data()) fc_sum += v;
    conv_n += trace.ac_conv_input.numel();
    fc_n += trace.ac_fc_input.numel();
  }
  return {conv_sum / static_cast<double>(conv_n), fc_sum / static_cast<double>(fc_n)};
}

void apply_rates(CostReport& report, const SpikeRates& rates) {
  for (auto& l : report.layers) {
    if (l.cost_class == CostClass::kAcConv) l.rate = rates.conv;
    if (l.cost_class == CostClass::kAcFc) l.rate = rates.fc;
  }
}

std::string format_microjoules(double joules) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", joules * 1e6);
  return buf;
}

std::string render_report(const CostReport& report, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::kJsonLines) {
    for (const auto& l : report.layers) {
      nlohmann::json j = {{"record", "layer"},  {"layer", l.name},          {"class", std::string(to_string(l.cost_class))},
                          {"static", l.flops},  {"effective", l.effective()}, {"uncounted", l.uncounted}};
      j["rate"] = l.rate ? nlohmann::json(*l.rate) : nlohmann::json(nullptr);
      out << j.dump() << '\n';
    }
    nlohmann::json t = {{"record", "totals"},
                        {"model", report.model},
                        {"mac_joules", report.energy.mac_joules},
                        {"ac_joules", report.energy.ac_joules},
                        {"mac_total", report.mac_total()},
                        {"ac_static_total", report.ac_static_total()},
                        {"ac_effective_total", report.ac_effective_total()},
                        {"uncounted_total", report.uncounted_total()},
                        {"energy_joules", report.energy_joules()},
                        {"energy_uj", format_microjoules(report.energy_joules())}};
    out << t.dump() << '\n';
    return out.str();
  }
  char line[256];
  std::snprintf(line, sizeof(line), "%-20s %-16s %14s %8s %16s %12s\n", "layer", "class", "static", "rate",
                "effective", "uncounted");
  out << "model: " << report.model << '\n' << line;
  for (const auto& l : report.layers) {
    char rate[32] = "-";
    if (l.rate) std::snprintf(rate, sizeof(rate), "%.4f", *l.rate);
    std::snprintf(line, sizeof(line), "%-20s %-16s %14llu %8s %16.1f %12llu\n", l.name.c_str(),
                  std::string(to_string(l.cost_class)).c_str(), static_cast<unsigned long long>(l.flops), rate,
                  l.effective(), static_cast<unsigned long long>(l.uncounted));
    out << line;
  }
  std::snprintf(line, sizeof(line),
                "MAC total: %llu\nAC static total: %llu\nAC effective total: %.1f\nuncounted ops: %llu\n",
                static_cast<unsigned long long>(report.mac_total()),
                static_cast<unsigned long long>(report.ac_static_total()), report.ac_effective_total(),
                static_cast<unsigned long long>(report.uncounted_total()));
  out << line << "energy (uJ): " << format_microjoules(report.energy_joules()) << '\n';
  return out.str();
}

CostReport parse_report_json_lines(std::string_view text) {
  CostReport r;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      if (j.at("record") == "layer") {
        LayerCost l;
        l.name = j.at("layer").get<std::string>();
        l.cost_class = parse_cost_class(j.at("class").get<std::string>());
        l.flops = j.at("static").get<std::uint64_t>();
        if (!j.at("rate").is_null()) l.rate = j.at("rate").get<double>();
        l.uncounted = j.at("uncounted").get<std::uint64_t>();
        r.layers.push_back(std::move(l));
      } else if (j.at("record") == "totals") {
        r.model = j.at("model").get<std::string>();
        r.energy.mac_joules = j.at("mac_joules").get<double>();
        r.energy.ac_joules = j.at("ac_joules").get<double>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("cost report line " + std::to_string(lineno) + ": " + e.what());
  }
  return r;
}

}  // namespace nisnn
