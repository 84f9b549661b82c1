#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "nisnn/data.hpp"
#include "nisnn/errors.hpp"

using namespace nisnn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("nisnn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

Trial ramp(std::size_t channels, std::size_t samples) {
  Trial t;
  t.ref = {"a", "t0", 0};
  t.channels = channels;
  t.samples = samples;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < samples; ++i) t.signal.push_back(static_cast<float>(100 * c + i));
  return t;
}

SynthConfig small_synth(std::uint64_t seed) {
  SynthConfig sc;
  sc.seed = seed;
  sc.trials_per_subject = 10;
  return sc;
}

}  // namespace

TEST_CASE("manifest validation") {
  DatasetManifest m;
  m.name = "x";
  m.channels = 2;
  m.samples = 4;
  m.subjects = {{"s1", {{"t0", 0}, {"t1", 1}}}};
  CHECK_NOTHROW(m.validate());
  CHECK(m.trial_count() == 2);
  auto dup = m;
  dup.subjects[0].trials[1].id = "t0";
  CHECK_THROWS_AS(dup.validate(), IngestError);
  auto label = m;
  label.subjects[0].trials[0].label = 5;
  CHECK_THROWS_AS(label.validate(), IngestError);
  auto back = manifest_from_json(manifest_to_json(m));
  CHECK(back.trials() == m.trials());
  CHECK(back.channels == 2);
}

TEST_CASE("native store round trip") {
  fs::path dir = temp_dir("store");
  SynthDataset d = synth_generate(small_synth(1));
  write_dataset(dir, d.manifest, d.trials);
  Dataset ds = Dataset::open(dir);
  auto loaded = ds.load_all();
  REQUIRE(loaded.size() == d.trials.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].ref == d.trials[i].ref);
    CHECK(loaded[i].signal == d.trials[i].signal);
  }
  fs::resize_file(dir / (d.trials[0].ref.key() + ".f32"), 12);
  CHECK_THROWS_AS(Dataset::open(dir), IngestError);
  CHECK_THROWS_AS(Dataset::open(dir / "nowhere"), IngestError);
}

TEST_CASE("CSV import, with downsampling and malformed input") {
  fs::path src = temp_dir("csv_src");
  fs::path dst = temp_dir("csv_dst");
  write(src / "manifest.json", R"({"name":"toy","channels":2,"samples":4,"target_samples":2,"sample_rate_hz":8,
    "trials":[{"subject":"p1","trial":"a","label":0,"file":"a.csv"},
              {"subject":"p2","trial":"b","label":1,"file":"b.csv"}]})");
  write(src / "a.csv", "0,1,2,3\n10,11,12,13\n");
  write(src / "b.csv", "4, 5, 6, 7\r\n14,15,16,17\r\n");
  DatasetManifest m = import_csv(src, dst);
  CHECK(m.samples == 2);
  CHECK(m.sample_rate_hz == 4.0);
  Dataset ds = Dataset::open(dst);
  Trial b = ds.load({"p2", "b", 1});
  CHECK(b.signal == std::vector<float>{4, 6, 14, 16});

  write(src / "b.csv", "4,5,x,7\n14,15,16,17\n");
  try {
    import_csv(src, temp_dir("csv_dst2"));
    FAIL("malformed CSV accepted");
  } catch (const IngestError& e) {
    CHECK(std::string(e.what()).find("b.csv") != std::string::npos);
  }
  write(src / "b.csv", "4,5,6\n14,15,16,17\n");
  CHECK_THROWS_AS(import_csv(src, temp_dir("csv_dst3")), IngestError);
  write(src / "b.csv", "4,5,6,7\n");
  CHECK_THROWS_AS(import_csv(src, temp_dir("csv_dst4")), IngestError);
}

TEST_CASE("uniform index downsampling") {
  Trial t = ramp(2, 10);
  Trial d = downsample(t, 4);
  // round(i * 10 / 4) for i = 0..3 -> 0, 3 (2.5 rounds away), 5, 8 (7.5)
  CHECK(d.signal == std::vector<float>{0, 3, 5, 8, 100, 103, 105, 108});
  CHECK(downsample(t, 10).signal == t.signal);
  CHECK_THROWS_AS(downsample(t, 11), ContractError);
}

TEST_CASE("segmenting into timepieces") {
  Trial t = ramp(2, 6);
  Tensor s = segment(t, 3, 2);
  REQUIRE(s.shape() == Shape{2, 3, 2});
  CHECK(s.at({0, 1, 0}) == 2.0F);
  CHECK(s.at({1, 2, 1}) == 105.0F);
  CHECK_THROWS_AS(segment(t, 4, 2), ConfigError);
  std::vector<const Trial*> both{&t, &t};
  CHECK(make_batch(both, 3, 2).shape() == Shape{2, 2, 3, 2});
}

TEST_CASE("leave-one-subject-out plans partition the trials") {
  SynthDataset d = synth_generate(small_synth(2));
  auto plans = loso_splits(d.manifest);
  REQUIRE(plans.size() == 3);
  CHECK(plans[0].held_out == "s01");
  for (const auto& p : plans) {
    std::set<std::string> keys;
    for (const auto& r : p.train) {
      CHECK(r.subject != p.held_out);
      keys.insert(r.key());
    }
    for (const auto& r : p.test) {
      CHECK(r.subject == p.held_out);
      keys.insert(r.key());
    }
    CHECK(keys.size() == d.manifest.trial_count());
    CHECK(p.test.size() == 10);
  }
  DatasetManifest one = d.manifest;
  one.subjects.resize(1);
  CHECK_THROWS_AS(loso_splits(one), ContractError);
}

TEST_CASE("synthetic generator") {
  SynthConfig sc = small_synth(7);
  SynthDataset a = synth_generate(sc);
  SynthDataset b = synth_generate(sc);
  CHECK(manifest_to_json(a.manifest) == manifest_to_json(b.manifest));
  for (std::size_t i = 0; i < a.trials.size(); ++i) CHECK(a.trials[i].signal == b.trials[i].signal);
  CHECK(synth_generate(small_synth(8)).trials[0].signal != a.trials[0].signal);

  SynthWindow w = synth_window(20, 400);
  CHECK(w.begin == 150);
  CHECK(w.end == 250);
  CHECK(w.channels.size() == 10);
  // Without noise, samples outside the window are exactly zero and the
  // band-power oracle separates the classes.
  for (const auto& t : a.trials) {
    for (std::size_t c = 0; c < t.channels; ++c)
      for (std::size_t i = 0; i < t.samples; ++i)
        if (i < w.begin || i >= w.end || c % 2 == 1) CHECK(t.at(c, i) == 0.0F);
    CHECK((oracle_feature(t, sc) > 0.0) == (t.ref.label == 1));
  }
  std::size_t ones = 0;
  for (const auto& t : a.trials) ones += t.ref.label;
  CHECK(ones * 2 == a.trials.size());
  SynthConfig bad = sc;
  bad.difficulty = -1.0;
  CHECK_THROWS_AS(synth_generate(bad), ConfigError);
}

TEST_CASE("noisy synthetic data still favours the oracle") {
  SynthConfig sc = small_synth(3);
  sc.difficulty = 0.5;
  SynthDataset d = synth_generate(sc);
  std::size_t correct = 0;
  for (const auto& t : d.trials) correct += (oracle_feature(t, sc) > 0.0) == (t.ref.label == 1);
  CHECK(correct > d.trials.size() * 3 / 4);
}
