#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "nisnn/checkpoint.hpp"
#include "nisnn/errors.hpp"
#include "nisnn/ops.hpp"
#include "nisnn/train.hpp"
#include "nisnn/verify.hpp"

using namespace nisnn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("nisnn_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Tiny {
  NetworkSpec spec;
  SynthDataset data;
  TrainConfig cfg;
};

Tiny tiny(Schedule schedule) {
  Tiny t;
  t.spec.channels = 4;
  t.spec.timepieces = 8;
  t.spec.steps = 8;
  t.spec.classifier_kernel = 3;
  t.spec.hidden = 6;
  t.spec.attention.kind = AttentionKind::kGlobal;
  SynthConfig sc;
  sc.channels = 4;
  sc.samples = 64;
  sc.trials_per_subject = 8;
  sc.seed = 1;
  t.data = synth_generate(sc);
  t.cfg.epochs = 2;
  t.cfg.pretrain_epochs = 2;
  t.cfg.batch = 5;
  t.cfg.schedule = schedule;
  return t;
}

}  // namespace

TEST_CASE("cross-entropy against a double-precision reference") {
  Tensor logits = Tensor::from_data({2, 3}, {1.0F, 2.0F, 0.5F, -1.0F, 0.0F, 3.0F});
  Tensor y = one_hot({1, 0}, 3);
  CHECK(std::vector<float>(y.data().begin(), y.data().end()) == std::vector<float>{0, 1, 0, 1, 0, 0});
  double z0 = std::exp(1.0) + std::exp(2.0) + std::exp(0.5);
  double z1 = std::exp(-1.0) + std::exp(0.0) + std::exp(3.0);
  double want = (-(2.0 - std::log(z0)) - (-1.0 - std::log(z1))) / 2.0;
  CHECK(ce_loss(logits, y).item() == doctest::Approx(want).epsilon(1e-6));
  Tensor p = Tensor::parameter({2, 3}, {1.0F, 2.0F, 0.5F, -1.0F, 0.0F, 3.0F});
  CHECK(fd_relative_error([y](const auto& in) { return ce_loss(in[0], y); }, {p}, 1) < 1e-3);
  CHECK_THROWS_AS(ce_loss(logits, one_hot({1}, 3)), DimensionError);
  CHECK_THROWS_AS(ce_loss(Tensor::from_data({1, 2}, {NAN, 0.0F}), one_hot({0}, 2)), NumericError);
}

TEST_CASE("prediction ties resolve to the lower class") {
  Tensor l = Tensor::from_data({3, 2}, {0.5F, 0.5F, 0.1F, 0.2F, 3.0F, -1.0F});
  CHECK(predict(l) == std::vector<int>{0, 1, 0});
  CHECK(accuracy({0, 1, 0}, {0, 1, 1}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("one Adam step matches the bias-corrected update") {
  TrainConfig cfg;
  cfg.lr = 0.1F;
  Tensor w = Tensor::parameter({2}, {1.0F, -2.0F});
  w.impl()->accumulate_grad(std::vector<float>{0.5F, -0.25F});
  AdamState st;
  adam_step({{"w", w}}, st, cfg);
  // With zero moments the first bias-corrected step is lr * g / (|g| + eps').
  for (std::size_t i = 0; i < 2; ++i) {
    double g = i == 0 ? 0.5 : -0.25;
    double mhat = (1 - 0.9) * g / (1 - 0.9);
    double vhat = (1 - 0.999) * g * g / (1 - 0.999);
    double want = (i == 0 ? 1.0 : -2.0) - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(w.data()[i] == doctest::Approx(want).epsilon(1e-6));
  }
  CHECK(st.step == 1);
  Tensor bad = Tensor::parameter({1}, {1.0F});
  bad.impl()->accumulate_grad(std::vector<float>{INFINITY});
  AdamState st2;
  try {
    adam_step({{"fc9.weight", bad}}, st2, cfg);
    FAIL("non-finite gradient accepted");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("fc9.weight") != std::string::npos);
  }
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.lr = -1.0F;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_schedule(to_string(Schedule::kCnnPretrainThenSnn)) == Schedule::kCnnPretrainThenSnn);
  CHECK_THROWS_AS(parse_schedule("later"), ConfigError);
}

TEST_CASE("training never sees the held-out subject and is reproducible") {
  Tiny t = tiny(Schedule::kCnnPretrainThenSnn);
  auto plans = loso_splits(t.data.manifest);
  fs::path a = temp_dir("train_a"), b = temp_dir("train_b");
  TrainResult ra = train_loop(t.spec, t.data.trials, plans[1], t.cfg, {a});
  TrainResult rb = train_loop(t.spec, t.data.trials, plans[1], t.cfg, {b});
  for (const auto& key : ra.trained_on) CHECK(key.rfind(plans[1].held_out + "_", 0) != 0);
  CHECK(ra.trained_on.size() == 16);
  CHECK(ra.complete);
  REQUIRE(ra.history.size() == 4);
  CHECK(ra.history[0].phase == "cnn");
  CHECK(ra.history[3].phase == "snn");
  CHECK(ra.history == rb.history);
  CHECK(ra.model.family() == Family::kSnn);
  CHECK(slurp(a / "model.ckpt") == slurp(b / "model.ckpt"));
  CHECK(slurp(a / "history.jsonl") == slurp(b / "history.jsonl"));
  CHECK(slurp(a / "history.jsonl") == history_json_lines(ra.history));
}

TEST_CASE("an interrupted run resumes to the same result") {
  Tiny t = tiny(Schedule::kCnnPretrainThenSnn);
  auto plans = loso_splits(t.data.manifest);
  fs::path full = temp_dir("resume_full"), part = temp_dir("resume_part");
  TrainResult ref = train_loop(t.spec, t.data.trials, plans[0], t.cfg, {full});
  for (std::size_t stop : {1UL, 3UL}) {
    TrainOptions o{part};
    o.max_epochs = stop;
    TrainResult first = train_loop(t.spec, t.data.trials, plans[0], t.cfg, o);
    CHECK(!first.complete);
    Checkpoint state = load_checkpoint(part / "state.ckpt");
    TrainOptions r{part};
    r.resume = &state;
    TrainResult rest = train_loop(t.spec, t.data.trials, plans[0], t.cfg, r);
    CHECK(rest.complete);
    CHECK(rest.history == ref.history);
    CHECK(slurp(part / "model.ckpt") == slurp(full / "model.ckpt"));
  }
}

TEST_CASE("direct schedule trains one family") {
  Tiny t = tiny(Schedule::kDirect);
  t.spec.family = Family::kCnn;
  auto plans = loso_splits(t.data.manifest);
  TrainResult r = train_loop(t.spec, t.data.trials, plans[2], t.cfg);
  CHECK(r.history.size() == 2);
  CHECK(r.model.family() == Family::kCnn);
  EvalResult e = evaluate(r.model, {&t.data.trials[0], &t.data.trials[1]}, 1);
  CHECK(e.count == 2);
  CHECK(e.confusion.size() == 2);
}

TEST_CASE("evaluation does not depend on the batch size") {
  Tiny t = tiny(Schedule::kDirect);
  Model m = build_model(t.spec, 4);
  std::vector<const Trial*> all;
  for (const auto& tr : t.data.trials) all.push_back(&tr);
  EvalResult a = evaluate(m, all, 1);
  EvalResult b = evaluate(m, all, 7);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.confusion == b.confusion);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-6));
}
