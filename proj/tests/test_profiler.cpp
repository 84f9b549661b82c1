#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>

#include "nisnn/errors.hpp"
#include "nisnn/nn.hpp"
#include "nisnn/profiler.hpp"

using namespace nisnn;

namespace {

NetworkSpec spec(Family f, AttentionKind k) {
  NetworkSpec s;
  s.family = f;
  s.attention.kind = k;
  return s;
}

}  // namespace

TEST_CASE("operation count formulas") {
  CHECK(flops_conv(1, 5, 20, 20, 20, 20) == 800000);
  CHECK(flops_conv(10, 10, 10, 10, 20, 20) == 4000000);
  CHECK(flops_fc(500, 20) == 10000);
  CHECK(flops_mm(10, 20, 10) == 2000);
  const auto big = std::numeric_limits<std::uint64_t>::max() / 2;
  CHECK_THROWS_AS(flops_fc(big, 3), ConfigError);
}

TEST_CASE("vanilla CNN and SNN static costs") {
  CostReport cnn = profile_static(build_cnn(spec(Family::kCnn, AttentionKind::kNone), 0));
  CHECK(cnn.mac_total() == 800000 + 4000000 + 10000 + 40);
  CHECK(cnn.mac_total() == 4810040);
  CHECK(cnn.ac_static_total() == 0);
  CostReport snn = profile_static(build_snn(spec(Family::kSnn, AttentionKind::kNone), 0));
  CHECK(snn.static_of("conv2") == 4000000);
  CHECK(snn.static_of("fc1") == 10000);
  CHECK(snn.ac_static_total() == 4010000);
  // Neuron overhead: two (1xT)(TxT) products per neuron and timepiece.
  CHECK(snn.static_of("lif1") == 2 * 20 * 20 * 20 * 20);
  CHECK(snn.static_of("lif2") == 2 * 20 * 10 * 10 * 10);
}

TEST_CASE("attention costs at the insertion extents") {
  // q/k projections C -> dC as 1x1 convolutions on a 10x10 map, then the
  // score product; the global mix is elementwise.
  CostReport g = profile_static(build_cnn(spec(Family::kCnn, AttentionKind::kGlobal), 0));
  CHECK(g.mac_total() == 4810040 + 2 * 10 * 10 * 160 * 20 + 20 * 10 * 80 * 10);
  CHECK(g.mac_total() == 5610040);
  AttentionConfig c;
  auto total = [](const std::vector<LayerCost>& v) {
    std::uint64_t s = 0;
    for (const auto& l : v) s += l.flops;
    return s;
  };
  c.kind = AttentionKind::kConvSeq;
  CHECK(total(attention_costs(c, 20, 10, 10)) == 820000);
  c.kind = AttentionKind::kConvChanSeq;
  CHECK(total(attention_costs(c, 20, 10, 10)) == 820000);
  c.kind = AttentionKind::kGlobal;
  CHECK(total(attention_costs(c, 20, 10, 10)) == 800000);
  c.kind = AttentionKind::kNone;
  CHECK(attention_costs(c, 20, 10, 10).empty());
}

TEST_CASE("energy model") {
  EnergyModel e;
  CHECK(energy_joules(e, 4810040, 0) * 1e6 == doctest::Approx(22.126184));
  double snn = energy_joules(e, 1170040, 0.3966 * 4e6 + 0.4311 * 1e4) * 1e6;
  CHECK(format_microjoules(snn * 1e-6) == "6.814");
  CHECK(std::abs(snn - 7.165) / 7.165 < 0.1);
  CHECK(format_microjoules(22.126184e-6) == "22.126");
}

TEST_CASE("rates scale only the accumulate layers") {
  CostReport r = profile_static(build_snn(spec(Family::kSnn, AttentionKind::kNone), 0));
  double before = r.energy_joules();
  CHECK(r.ac_effective_total() == doctest::Approx(4010000.0));
  apply_rates(r, {0.25, 0.5});
  CHECK(r.ac_effective_total() == doctest::Approx(1000000.0 + 5000.0));
  CHECK(r.mac_total() == 800000 + 320000 + 40000 + 40);
  CHECK(r.energy_joules() < before);
}

TEST_CASE("measured rates lie in [0,1]") {
  Model m = build_snn(spec(Family::kSnn, AttentionKind::kNone), 1);
  Rng rng(2);
  std::vector<float> v(2 * 8000);
  for (float& x : v) x = rng.uniform(-1.0F, 1.0F);
  std::vector<Tensor> batches{Tensor::from_data({2, 20, 20, 20}, v)};
  SpikeRates s = measure_spike_rates(m, batches);
  CHECK((s.conv >= 0.0 && s.conv <= 1.0));
  CHECK((s.fc >= 0.0 && s.fc <= 1.0));
  CHECK_THROWS_AS(measure_spike_rates(m, {}), ContractError);
}

TEST_CASE("json-lines report round-trips and its totals match the table") {
  CostReport r = profile_static(build_snn(spec(Family::kSnn, AttentionKind::kConvChanSeq), 0));
  apply_rates(r, {0.1, 0.2});
  std::string text = render_report(r, ReportFormat::kJsonLines);
  CHECK(text.back() == '\n');
  CostReport back = parse_report_json_lines(text);
  CHECK(back == r);
  std::string table = render_report(r, ReportFormat::kTable);
  CHECK(table.find("MAC total: " + std::to_string(r.mac_total())) != std::string::npos);
  CHECK(parse_cost_class("AC-conv") == CostClass::kAcConv);
  CHECK_THROWS_AS(parse_report_json_lines("{\"record\":\"layer\"}\n"), Error);
}
