#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nisnn/attention.hpp"
#include "nisnn/model.hpp"

namespace nisnn {

std::uint64_t flops_conv(std::uint64_t k0, std::uint64_t k1, std::uint64_t h, std::uint64_t w, std::uint64_t c_out,
                         std::uint64_t c_in);
std::uint64_t flops_fc(std::uint64_t in, std::uint64_t out);
std::uint64_t flops_mm(std::uint64_t m1, std::uint64_t n, std::uint64_t m2);

struct EnergyModel {
  double mac_joules = 4.6e-12;
  double ac_joules = 0.9e-12;
};

enum class CostClass { kMacConv, kMacFc, kMacMatmul, kAcConv, kAcFc, kNeuronOverhead };
std::string_view to_string(CostClass c);
CostClass parse_cost_class(std::string_view name);
bool is_ac(CostClass c);

struct LayerCost {
  std::string name;
  CostClass cost_class = CostClass::kMacConv;
  std::uint64_t flops = 0;           // static count
  std::optional<double> rate;        // measured input spike rate, AC layers only
  std::uint64_t uncounted = 0;       // bias adds, comparisons, subtractions, softmax terms

  /// static * rate for AC layers with a measured rate, static otherwise.
  double effective() const;

  bool operator==(const LayerCost&) const = default;
};

struct CostReport {
  std::string model;
  EnergyModel energy;
  std::vector<LayerCost> layers;

  std::uint64_t mac_total() const;
  std::uint64_t ac_static_total() const;
  double ac_effective_total() const;
  std::uint64_t uncounted_total() const;
  std::uint64_t static_of(std::string_view layer) const;
  double energy_joules() const;

  bool operator==(const CostReport& o) const {
    return model == o.model && energy.mac_joules == o.energy.mac_joules && energy.ac_joules == o.energy.ac_joules &&
           layers == o.layers;
  }
};

/// energy = mac_joules * macs + ac_joules * ac_effective
double energy_joules(const EnergyModel& e, double macs, double ac_effective);

/// MAC terms of one attention mechanism at insertion extents (C, S, T).
std::vector<LayerCost> attention_costs(const AttentionConfig& cfg, std::size_t channels, std::size_t timepieces,
                                       std::size_t steps);

/// Static accounting of a model: weighted layers, attention internals and,
/// for the SNN family, the neuron overhead of each spiking layer (two
/// (1 x T)(T x T) products per neuron). Rates are left unset.
CostReport profile_static(const Model& model);

struct SpikeRates {
  double conv = 0.0;  // mean of the binary input to the AC conv layer
  double fc = 0.0;    // mean of the binary input to the AC linear layer
};

/// Mean input activity of the AC layers over the batches (inference mode,
/// no gradient recording). Throws ContractError on an empty batch list.
SpikeRates measure_spike_rates(Model& model, std::span<const Tensor> batches);
/// Sets the rate of every AC layer in the report.
void apply_rates(CostReport& report, const SpikeRates& rates);

enum class ReportFormat { kTable, kJsonLines };

/// Fixed three-decimal microjoule rendering.
std::string format_microjoules(double joules);
std::string render_report(const CostReport& report, ReportFormat format);
/// Inverse of the json-lines rendering.
CostReport parse_report_json_lines(std::string_view text);

}  // namespace nisnn
