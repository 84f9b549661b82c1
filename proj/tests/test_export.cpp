#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "nisnn/errors.hpp"
#include "nisnn/export.hpp"

using namespace nisnn;

namespace {

std::vector<std::vector<std::string>> rows(const std::string& csv) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    out.push_back(cells);
  }
  return out;
}

}  // namespace

TEST_CASE("attention export tables") {
  NetworkSpec spec;
  Model m = build_snn(spec, 3);
  m.attention.alpha().mutable_data()[0] = 0.5F;
  SynthConfig sc;
  sc.trials_per_subject = 2;
  sc.subjects = 1;
  SynthDataset d = synth_generate(sc);
  AttentionExport e = export_attention(m, d.trials[1]);

  auto att = rows(e.attention_csv);
  REQUIRE(att[0] == std::vector<std::string>{"channel", "timepiece", "step", "raw", "normalized"});
  CHECK(att.size() == 1 + 20 * 10 * 10);
  double lo = 1.0, hi = 0.0;
  for (std::size_t i = 1; i < att.size(); ++i) {
    double v = std::stod(att[i][4]);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo == 0.0);
  CHECK(hi == 1.0);

  auto raster = rows(e.raster_csv);
  CHECK(raster.size() == 1 + 20 * 20 * 20);
  for (std::size_t i = 1; i < raster.size(); ++i) CHECK((raster[i][3] == "0" || raster[i][3] == "1"));

  auto input = rows(e.input_csv);
  CHECK(input.size() == 21);
  CHECK(input[1].size() == 401);
  CHECK(rows(e.channel_mean_csv).size() == 401);

  AttentionExport again = export_attention(m, d.trials[1]);
  CHECK(again.attention_csv == e.attention_csv);
  CHECK(again.raster_csv == e.raster_csv);
}

TEST_CASE("models without attention have nothing to export") {
  NetworkSpec spec;
  spec.attention.kind = AttentionKind::kNone;
  Model m = build_snn(spec, 1);
  SynthConfig sc;
  sc.trials_per_subject = 2;
  sc.subjects = 1;
  CHECK_THROWS_AS(export_attention(m, synth_generate(sc).trials[0]), ContractError);
}

TEST_CASE("window coverage on the half-resolution map") {
  NetworkSpec spec;  // S = T = 20, attention on a 10x10 map
  auto cov = score_window_coverage(spec, {20, 10, 10}, 150, 250);
  // Row 3 covers timepieces 6 and 7; only the second half of timepiece 7
  // (samples 150..159) lies inside.
  CHECK(cov[3 * 10 + 0] == 0.0);
  CHECK(cov[3 * 10 + 5] == 0.5);
  CHECK(cov[4 * 10 + 0] == 1.0);
  CHECK(cov[5 * 10 + 9] == 1.0);
  CHECK(cov[6 * 10 + 4] == 0.5);
  CHECK(cov[6 * 10 + 5] == 0.0);
  spec.attention.kind = AttentionKind::kConvSeq;
  auto seq = score_window_coverage(spec, {10, 10}, 150, 250);
  CHECK(seq[3] == 0.25);
  CHECK(seq[4] == 1.0);

  spec.attention.kind = AttentionKind::kGlobal;
  std::vector<float> s(100, 0.1F);
  for (std::size_t i = 40; i < 60; ++i) s[i] = 0.3F;
  CHECK(window_score_ratio(spec, Tensor::from_data({1, 10, 10}, s), 150, 250) == doctest::Approx(2.6).epsilon(1e-6));
}
