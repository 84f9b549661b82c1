#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "nisnn/checkpoint.hpp"
#include "nisnn/errors.hpp"
#include "nisnn/model.hpp"
#include "nisnn/nn.hpp"
#include "nisnn/ops.hpp"

using namespace nisnn;
namespace fs = std::filesystem;

namespace {

NetworkSpec vanilla(Family f) {
  NetworkSpec s;
  s.family = f;
  s.attention.kind = AttentionKind::kNone;
  return s;
}

Tensor random_batch(std::size_t b, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(b * 20 * 20 * 20);
  for (float& x : v) x = rng.uniform(-1.0F, 1.0F);
  return Tensor::from_data({b, 20, 20, 20}, v);
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("nisnn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("parameter count from the layer extents") {
  // conv1 20x20x1x5 + 20, conv2 20x20x10x10 + 20, fc1 500->20, fc2 20->2,
  // two per-channel affine normalisations.
  const std::size_t expected = (20 * 20 * 5 + 20) + (20 * 20 * 100 + 20) + (500 * 20 + 20) + (20 * 2 + 2) + 4 * 20;
  CHECK(expected == 52182);
  CHECK(build_snn(vanilla(Family::kSnn), 0).parameter_count() == 52182);
  CHECK(build_cnn(vanilla(Family::kCnn), 0).parameter_count() == 52182);
  NetworkSpec g = vanilla(Family::kSnn);
  g.attention.kind = AttentionKind::kGlobal;
  // Two 1x1 projections 20 -> 160 plus the residual gate.
  CHECK(build_snn(g, 0).parameter_count() - 52182 == 2 * (160 * 20 + 160) + 1);
}

TEST_CASE("forward produces logits for both families") {
  for (Family f : {Family::kSnn, Family::kCnn}) {
    NetworkSpec s = vanilla(f);
    s.attention.kind = AttentionKind::kGlobal;
    Model m = build_model(s, 1);
    ForwardTrace tr;
    Tensor y = m.forward(random_batch(3, 2), Mode::kInfer, &tr);
    CHECK(y.shape() == Shape{3, 2});
    CHECK(tr.ac_conv_input.shape() == Shape{3, 20, 10, 10});
    CHECK(tr.ac_fc_input.shape() == Shape{3, 500});
    CHECK(tr.attention_scores.shape() == Shape{3, 20, 10, 10});
    if (f == Family::kSnn) {
      for (float v : tr.ac_conv_input.data()) CHECK((v == 0.0F || v == 1.0F));
      for (float v : tr.ac_fc_input.data()) CHECK((v == 0.0F || v == 1.0F));
    }
  }
}

TEST_CASE("layer designations") {
  auto snn = build_snn(vanilla(Family::kSnn), 0).layers();
  auto cnn = build_cnn(vanilla(Family::kCnn), 0).layers();
  REQUIRE(snn.size() == 4);
  CHECK(snn[0].op_class == OpClass::kMacConv);
  CHECK(snn[1].op_class == OpClass::kAcConv);
  CHECK(snn[2].op_class == OpClass::kAcFc);
  CHECK(snn[3].op_class == OpClass::kMacFc);
  CHECK(cnn[1].op_class == OpClass::kMacConv);
  CHECK(cnn[2].op_class == OpClass::kMacFc);
}

TEST_CASE("spec validation") {
  NetworkSpec s = vanilla(Family::kSnn);
  s.timepieces = 10;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = vanilla(Family::kSnn);
  s.attention.kind = AttentionKind::kGlobal;
  s.steps = 24;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK(parse_family("cnn") == Family::kCnn);
  CHECK_THROWS_AS(parse_family("rnn"), ConfigError);
}

TEST_CASE("weights transfer from the convolutional to the spiking network") {
  NetworkSpec s = vanilla(Family::kCnn);
  s.attention.kind = AttentionKind::kConvSeq;
  Model cnn = build_cnn(s, 3);
  cnn.forward(random_batch(4, 4), Mode::kTrain);  // moves running statistics
  s.family = Family::kSnn;
  Model snn = build_snn(s, 5);
  transfer_weights_cnn_to_snn(cnn, snn);
  auto a = cnn.parameters();
  auto b = snn.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::equal(a[i].second.data().begin(), a[i].second.data().end(), b[i].second.data().begin()));
  }
  CHECK(snn.lif1.bn_state().running_mean == cnn.bn1.state.running_mean);
  CHECK(snn.lif2.bn_state().running_var == cnn.bn2.state.running_var);

  NetworkSpec other = s;
  other.hidden = 30;
  Model wrong = build_snn(other, 5);
  CHECK_THROWS_AS(transfer_weights_cnn_to_snn(cnn, wrong), TransferError);
  NetworkSpec g = s;
  g.attention.kind = AttentionKind::kGlobal;
  Model wrong_kind = build_snn(g, 5);
  CHECK_THROWS_AS(transfer_weights_cnn_to_snn(cnn, wrong_kind), TransferError);
}

TEST_CASE("construction is deterministic in the seed") {
  auto a = build_snn(vanilla(Family::kSnn), 9).parameters();
  auto b = build_snn(vanilla(Family::kSnn), 9).parameters();
  auto c = build_snn(vanilla(Family::kSnn), 10).parameters();
  CHECK(std::equal(a[0].second.data().begin(), a[0].second.data().end(), b[0].second.data().begin()));
  CHECK(!std::equal(a[0].second.data().begin(), a[0].second.data().end(), c[0].second.data().begin()));
}

TEST_CASE("checkpoint round trip restores identical outputs") {
  fs::path dir = temp_dir("ckpt");
  NetworkSpec s = vanilla(Family::kSnn);
  s.attention.kind = AttentionKind::kGlobal;
  Model m = build_snn(s, 11);
  m.attention.alpha().mutable_data()[0] = 0.3F;
  m.forward(random_batch(2, 12), Mode::kTrain);
  Checkpoint c;
  c.meta["note"] = "unit";
  append_model_state(c, m);
  save_checkpoint(dir / "m.ckpt", c);
  Checkpoint back = load_checkpoint(dir / "m.ckpt");
  CHECK(back.meta["note"] == "unit");
  Model r = model_from_checkpoint(back);
  CHECK(r.spec().same_architecture(s));
  Tensor x = random_batch(2, 13);
  Tensor ya = m.forward(x, Mode::kInfer);
  Tensor yb = r.forward(x, Mode::kInfer);
  CHECK(std::equal(ya.data().begin(), ya.data().end(), yb.data().begin()));

  // Saving twice yields identical bytes.
  save_checkpoint(dir / "again.ckpt", back);
  std::ifstream f1(dir / "m.ckpt", std::ios::binary), f2(dir / "again.ckpt", std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {}), b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);
  CHECK(b1.substr(0, 8) == "NISNNCKP");
}

TEST_CASE("damaged checkpoints are rejected") {
  fs::path dir = temp_dir("ckpt_bad");
  Checkpoint c;
  c.entries.push_back({"param/x", {2, 2}, {1, 2, 3, 4}});
  save_checkpoint(dir / "c.ckpt", c);
  std::string bytes;
  {
    std::ifstream in(dir / "c.ckpt", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(dir / "d.ckpt", std::ios::binary | std::ios::trunc);
    out << b;
  };
  std::string flipped = bytes;
  flipped[flipped.size() - 12] ^= 0x01;  // inside the payload
  write(flipped);
  CHECK_THROWS_AS(load_checkpoint(dir / "d.ckpt"), CheckpointError);
  write(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint(dir / "d.ckpt"), CheckpointError);
  std::string magic = bytes;
  magic[0] = 'X';
  write(magic);
  CHECK_THROWS_AS(load_checkpoint(dir / "d.ckpt"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
  CHECK_THROWS_AS(c.at("param/y"), CheckpointError);
}

TEST_CASE("FNV-1a reference values") {
  CHECK(fnv1a64(nullptr, 0) == 0xcbf29ce484222325ULL);
  const unsigned char a[] = {'a'};
  CHECK(fnv1a64(a, 1) == 0xaf63dc4c8601ec8cULL);
}
