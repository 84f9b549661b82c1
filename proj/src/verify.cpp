#include "nisnn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "nisnn/attention.hpp"
#include "nisnn/data.hpp"
#include "nisnn/errors.hpp"
#include "nisnn/lif.hpp"
#include "nisnn/model.hpp"
#include "nisnn/nn.hpp"
#include "nisnn/ops.hpp"
#include "nisnn/profiler.hpp"
#include "nisnn/train.hpp"

namespace nisnn {

double fd_relative_error(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                         std::uint64_t seed, double h) {
  Tensor probe_shape;
  {
    NoGradScope no_grad;
    probe_shape = f(inputs);
  }
  Rng rng(seed);
  std::vector<float> r(probe_shape.numel());
  for (float& v : r) v = rng.uniform(-1.0F, 1.0F);
  Tensor weights = Tensor::from_data(probe_shape.shape(), r);

  auto probe = [&]() {
    NoGradScope no_grad;
    Tensor out = f(inputs);
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += static_cast<double>(r[i]) * out.data()[i];
    return s;
  };

  for (auto& t : inputs) t.zero_grad();
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(mul(f(inputs), weights));
  }
  backward(loss);

  double max_diff = 0.0;
  double max_analytic = 0.0;
  double max_numeric = 0.0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    std::vector<float> analytic(t.grad().begin(), t.grad().end());
    if (analytic.empty()) analytic.assign(t.numel(), 0.0F);
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const float saved = data[i];
      data[i] = static_cast<float>(saved + h);
      double plus = probe();
      data[i] = static_cast<float>(saved - h);
      double minus = probe();
      data[i] = saved;
      double numeric = (plus - minus) / (2.0 * h);
      max_diff = std::max(max_diff, std::abs(numeric - analytic[i]));
      max_analytic = std::max(max_analytic, std::abs(static_cast<double>(analytic[i])));
      max_numeric = std::max(max_numeric, std::abs(numeric));
    }
  }
  double scale = std::max(max_analytic, max_numeric);
  return scale == 0.0 ? 0.0 : max_diff / scale;
}

namespace {

std::vector<float> uniform(Rng& rng, std::size_t n, float lo = -1.0F, float hi = 1.0F) {
  std::vector<float> v(n);
  for (float& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Values kept at least `gap` away from zero so kinks are not straddled by
// the finite-difference stencil.
std::vector<float> away_from_zero(Rng& rng, std::size_t n, float gap) {
  std::vector<float> v(n);
  for (float& x : v) {
    do {
      x = rng.uniform(-1.0F, 1.0F);
    } while (std::abs(x) < gap);
  }
  return v;
}

LeakyKernel suite_kernel(std::size_t t_n, const VerifyOptions& o) {
  LeakyKernel k = build_leaky_kernel(2.0, 1.0, 0.5, t_n);
  if (o.inject_wrong_l_out) {
    std::vector<float> bad(k.l_in.data().begin(), k.l_in.data().end());
    for (float& v : bad) v *= static_cast<float>(k.v_th);
    k.l_out = Tensor::from_data(k.l_in.shape(), std::move(bad));
  }
  return k;
}

std::vector<float> row(const Tensor& t, std::size_t r, std::size_t len) {
  return {t.data().begin() + static_cast<std::ptrdiff_t>(r * len),
          t.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * len)};
}

SuiteResult suite_props1(const VerifyOptions& o) {
  SuiteResult res;
  res.suite = "props1";
  Rng rng(derive_seed(o.seed, 11));
  const std::size_t n = 1000;
  for (std::size_t t_n : {9UL, 49UL, 199UL}) {
    LeakyKernel k = suite_kernel(t_n, o);
    const std::size_t steps = k.steps();
    const auto vth = static_cast<float>(k.v_th);
    Tensor x = Tensor::from_data({n, steps}, uniform(rng, n * steps));
    NoGradScope no_grad;
    Tensor e = matmul(x, k.l_in);
    Tensor all_reset = matmul(Tensor::full({1, steps}, 1.0F), k.l_out);
    Tensor lower = heaviside(sub(e, all_reset), vth);
    Tensor upper = heaviside(e, vth);
    Tensor exact = exact_lif_solve(x, k).spikes;
    // The exact train must also be a fixed point of U = E_in - O L_out.
    Tensor fixed = heaviside(sub(e, matmul(exact, k.l_out)), vth);
    for (std::size_t s = 0; s < n; ++s) {
      ++res.checks;
      for (std::size_t t = 0; t < steps; ++t) {
        std::size_t i = s * steps + t;
        float lo = lower.data()[i], mid = exact.data()[i], hi = upper.data()[i], fp = fixed.data()[i];
        if (lo <= mid && mid <= hi && fp == mid) continue;
        res.passed = false;
        res.detail = "t_n=" + std::to_string(t_n) + " sequence " + std::to_string(s) + " step " + std::to_string(t);
        res.counterexample = {{"t_n", t_n},
                              {"sequence", s},
                              {"step", t},
                              {"x", row(x, s, steps)},
                              {"exact_spikes", row(exact, s, steps)},
                              {"lower_bound", row(lower, s, steps)},
                              {"upper_bound", row(upper, s, steps)},
                              {"closed_form", row(fixed, s, steps)}};
        return res;
      }
    }
  }
  res.detail = "lower <= exact <= upper and closed-form consistency on 3x1000 sequences";
  return res;
}

SuiteResult suite_nofire(const VerifyOptions& o) {
  SuiteResult res;
  res.suite = "nofire";
  Rng rng(derive_seed(o.seed, 12));
  const std::size_t n = 1000;
  LeakyKernel k = suite_kernel(49, o);
  const std::size_t steps = k.steps();
  NoGradScope no_grad;
  std::vector<float> xs = uniform(rng, n * steps);
  {
    // Scale every sequence so that its accumulated input stays below threshold.
    Tensor e = matmul(Tensor::from_data({n, steps}, xs), k.l_in);
    for (std::size_t s = 0; s < n; ++s) {
      float mx = 0.0F;
      for (std::size_t t = 0; t < steps; ++t) mx = std::max(mx, e.data()[s * steps + t]);
      float factor = mx > 0.0F ? 0.9F * static_cast<float>(k.v_th) / mx : 1.0F;
      for (std::size_t t = 0; t < steps; ++t) xs[s * steps + t] *= factor;
    }
  }
  Tensor x = Tensor::from_data({n, steps}, xs);
  Tensor e = matmul(x, k.l_in);
  NeuronOutput exact = exact_lif_solve(x, k);
  NeuronOutput ni = nilif_forward(x, k);
  NeuronOutput it = iterative_lif_forward(x, IterativeLif::from_kernel(k));
  for (std::size_t s = 0; s < n; ++s) {
    ++res.checks;
    for (std::size_t t = 0; t < steps; ++t) {
      std::size_t i = s * steps + t;
      float ue = exact.potential.data()[i];
      bool ok = exact.spikes.data()[i] == 0.0F && ni.spikes.data()[i] == 0.0F && it.spikes.data()[i] == 0.0F &&
                std::abs(ni.potential.data()[i] - ue) < 1e-5F && std::abs(ue - e.data()[i]) < 1e-5F &&
                std::abs(it.potential.data()[i] - e.data()[i]) < 1e-5F;
      if (ok) continue;
      res.passed = false;
      res.detail = "sequence " + std::to_string(s) + " step " + std::to_string(t);
      res.counterexample = {{"sequence", s},
                            {"step", t},
                            {"x", row(x, s, steps)},
                            {"u_exact", row(exact.potential, s, steps)},
                            {"u_nilif", row(ni.potential, s, steps)},
                            {"u_iterative", row(it.potential, s, steps)}};
      return res;
    }
  }
  // Regression input on which the exact dynamics fire twice and NiLIF once.
  LeakyKernel k9 = suite_kernel(9, o);
  Tensor fixture = Tensor::from_data({1, 10}, {0.17F, -0.15F, 0.25F, 0.02F, 1.16F, 0.12F, 0.13F, 0.12F, 0.0F, 0.49F});
  auto fired = [](const Tensor& spikes) {
    std::vector<std::size_t> at;
    for (std::size_t t = 0; t < spikes.numel(); ++t) {
      if (spikes.data()[t] != 0.0F) at.push_back(t);
    }
    return at;
  };
  auto ex = fired(exact_lif_solve(fixture, k9).spikes);
  auto nl = fired(nilif_forward(fixture, k9).spikes);
  ++res.checks;
  bool subset = std::includes(ex.begin(), ex.end(), nl.begin(), nl.end()) && nl.size() < ex.size();
  if (!subset) {
    res.passed = false;
    res.detail = "fixture: NiLIF spikes are not a strict subset of the exact spikes";
    res.counterexample = {{"x", row(fixture, 0, 10)}, {"exact_fires", ex}, {"nilif_fires", nl}};
    return res;
  }
  res.detail = "1000 sub-threshold sequences agree; fixture fires exact " + nlohmann::json(ex).dump() + " nilif " +
               nlohmann::json(nl).dump();
  return res;
}

SuiteResult suite_gradients(const VerifyOptions& o) {
  SuiteResult res;
  res.suite = "gradients";
  // Geometric decay of the first input's contribution in the recurrent model.
  IterativeLif layer;
  layer.lambda = 0.9F;
  layer.v_th = 0.5F;
  const std::size_t steps = 101;
  for (std::size_t t : {10UL, 50UL, 100UL}) {
    std::vector<float> xs(steps, 0.0F);
    xs[0] = 0.1F;
    Tensor x = Tensor::parameter({1, steps}, xs);
    std::vector<float> pick(steps, 0.0F);
    pick[t] = 1.0F;
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = sum(mul(iterative_lif_forward(x, layer).potential, Tensor::from_data({1, steps}, pick)));
    }
    backward(loss);
    double got = x.grad()[0];
    double want = std::pow(0.9, static_cast<double>(t));
    ++res.checks;
    if (std::abs(got - want) >= 1e-6) {
      res.passed = false;
      res.detail = "iterative du/dx0 at t=" + std::to_string(t);
      res.counterexample = {{"t", t}, {"autodiff", got}, {"lambda_pow_t", want}};
      return res;
    }
  }
  // NiLIF keeps the gradient of a late spike-free potential with respect to
  // a shared weight: sum_i x^i L(t - i).
  LeakyKernel k = suite_kernel(199, o);
  const std::size_t n = k.steps();
  std::vector<float> xs(n, -0.01F);
  xs[n - 1] = 0.8F;
  Tensor w = Tensor::parameter({1}, {1.0F});
  std::vector<float> pick(n, 0.0F);
  pick[n - 1] = 1.0F;
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    Tensor weighted = mul(w, Tensor::from_data({1, n}, xs));
    loss = sum(mul(nilif_forward(weighted, k).potential, Tensor::from_data({1, n}, pick)));
  }
  backward(loss);
  double want = 0.0;
  for (std::size_t i = 0; i < n; ++i) want += static_cast<double>(xs[i]) * std::exp(-static_cast<double>(n - 1 - i) / 2.0);
  double got = w.grad()[0];
  ++res.checks;
  if (std::abs(got - want) >= 1e-6 || std::abs(got) <= 1e-3) {
    res.passed = false;
    res.detail = "NiLIF weight gradient at t_n=199";
    res.counterexample = {{"autodiff", got}, {"closed_form", want}};
    return res;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "lambda^100 = %.4e reproduced; NiLIF dU/dw = %.6f at t_n=199", std::pow(0.9, 100.0),
                got);
  res.detail = buf;
  return res;
}

constexpr AttentionKind kKinds[] = {AttentionKind::kLinearSeq, AttentionKind::kConvSeq, AttentionKind::kLinearChanSeq,
                                    AttentionKind::kConvChanSeq, AttentionKind::kGlobal};

AttentionConfig small_attention(AttentionKind kind) {
  AttentionConfig c;
  c.kind = kind;
  c.d1 = 2;
  c.d2 = 3;
  c.d = 2;
  return c;
}

SuiteResult suite_attention(const VerifyOptions& o) {
  SuiteResult res;
  res.suite = "attention";
  Rng rng(derive_seed(o.seed, 13));
  const Shape shape{2, 3, 4, 4};
  NoGradScope no_grad;
  auto fail = [&res](AttentionKind kind, const std::string& what) {
    res.passed = false;
    res.detail = std::string(to_string(kind)) + ": " + what;
    res.counterexample = {{"kind", std::string(to_string(kind))}, {"violation", what}};
  };
  for (AttentionKind kind : kKinds) {
    Rng init(derive_seed(o.seed, 14));
    Attention att(small_attention(kind), 3, 4, 4, init);
    Tensor x = Tensor::from_data(shape, uniform(rng, shape_numel(shape)));
    AttentionOutput out = att.forward(x);
    ++res.checks;
    if (out.out.shape() != shape) return fail(kind, "output shape " + shape_str(out.out.shape())), res;
    std::size_t cols = out.scores.shape().back();
    for (std::size_t r = 0; r < out.scores.numel() / cols; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        float v = out.scores.data()[r * cols + c];
        if (!(v > 0.0F && v < 1.0F)) return fail(kind, "score outside (0,1)"), res;
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-6) return fail(kind, "row sum " + std::to_string(s)), res;
    }
    ++res.checks;
    if (is_residual(kind)) {
      auto xd = x.data();
      auto od = out.out.data();
      if (!std::equal(xd.begin(), xd.end(), od.begin())) return fail(kind, "alpha=0 is not the identity"), res;
    }
    // Perturbing sample 1 must leave sample 0 untouched.
    if (is_residual(kind)) att.alpha().mutable_data()[0] = 0.5F;
    Tensor base = att.forward(x).out;
    std::vector<float> moved(x.data().begin(), x.data().end());
    for (std::size_t i = moved.size() / 2; i < moved.size(); ++i) moved[i] += 0.25F;
    Tensor other = att.forward(Tensor::from_data(shape, moved)).out;
    ++res.checks;
    if (!std::equal(base.data().begin(), base.data().begin() + static_cast<std::ptrdiff_t>(base.numel() / 2),
                    other.data().begin())) {
      return fail(kind, "sample 0 changed when sample 1 was perturbed"), res;
    }
  }
  res.detail = "shape, row sums, alpha=0 identity and batch independence for five mechanisms";
  return res;
}

SuiteResult suite_fd(const VerifyOptions& o) {
  SuiteResult res;
  res.suite = "fd";
  Rng rng(derive_seed(o.seed, 15));
  struct Case {
    std::string name;
    std::function<Tensor(const std::vector<Tensor>&)> f;
    std::vector<Tensor> inputs;
  };
  auto p = [&rng](Shape s) { return Tensor::parameter(s, uniform(rng, shape_numel(s))); };
  auto pk = [&rng](Shape s) { return Tensor::parameter(s, away_from_zero(rng, shape_numel(s), 0.05F)); };
  auto state = std::make_shared<BatchNormState>(3);
  std::vector<Case> cases = {
      {"add", [](const auto& in) { return add(in[0], in[1]); }, {p({3, 4}), p({4})}},
      {"sub", [](const auto& in) { return sub(in[0], in[1]); }, {p({2, 3, 4}), p({3, 1})}},
      {"mul", [](const auto& in) { return mul(in[0], in[1]); }, {p({2, 3, 4}), p({1, 3, 4})}},
      {"scale", [](const auto& in) { return scale(in[0], -1.7F); }, {p({5})}},
      {"relu", [](const auto& in) { return relu(in[0]); }, {pk({4, 5})}},
      {"permute", [](const auto& in) { return permute(in[0], {2, 0, 1}); }, {p({2, 3, 4})}},
      {"reshape", [](const auto& in) { return reshape(in[0], {6, 4}); }, {p({2, 3, 4})}},
      {"sum", [](const auto& in) { return sum(in[0]); }, {p({3, 3})}},
      {"mean", [](const auto& in) { return mean(in[0]); }, {p({3, 3})}},
      {"matmul", [](const auto& in) { return matmul(in[0], in[1]); }, {p({4, 5}), p({5, 3})}},
      {"matmul-batched", [](const auto& in) { return matmul(in[0], in[1]); }, {p({2, 3, 4}), p({4, 2})}},
      {"linear", [](const auto& in) { return linear(in[0], in[1], in[2]); }, {p({2, 3, 5}), p({4, 5}), p({4})}},
      {"conv2d", [](const auto& in) { return conv2d_same(in[0], in[1], in[2]); },
       {p({2, 3, 6, 6}), p({4, 3, 3, 3}), p({4})}},
      {"max_pool2d", [](const auto& in) { return max_pool2d(in[0]); },
       {Tensor::parameter({1, 2, 4, 4}, [&rng] {
          // distinct values 0.1 apart so no window has a near tie
          std::vector<float> v(32);
          for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1F * static_cast<float>(i) - 1.6F;
          for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
          return v;
        }())}},
      {"avg_pool2d", [](const auto& in) { return avg_pool2d(in[0]); }, {p({2, 2, 4, 4})}},
      {"batchnorm", [state](const auto& in) { return batchnorm(in[0], in[1], in[2], *state, Mode::kTrain); },
       {p({2, 3, 2, 2}), p({3}), p({3})}},
      {"softmax", [](const auto& in) { return softmax_lastdim(in[0]); }, {p({3, 5})}},
      {"ce_loss",
       [](const auto& in) { return ce_loss(in[0], Tensor::from_data({3, 2}, {1, 0, 0, 1, 0, 1})); },
       {p({3, 2})}},
  };
  for (AttentionKind kind : kKinds) {
    Rng init(derive_seed(o.seed, 16));
    auto att = std::make_shared<Attention>(small_attention(kind), 3, 4, 4, init);
    if (is_residual(kind)) att->alpha().mutable_data()[0] = 0.7F;
    std::vector<Tensor> inputs{p({2, 3, 4, 4})};
    for (auto& [name, t] : att->parameters()) inputs.push_back(t);
    cases.push_back({"attention/" + std::string(to_string(kind)),
                     [att](const auto& in) { return att->forward(in[0]).out; }, inputs});
  }
  double worst = 0.0;
  std::string worst_name;
  for (auto& c : cases) {
    double err = fd_relative_error(c.f, c.inputs, derive_seed(o.seed, 17));
    ++res.checks;
    if (err > worst) {
      worst = err;
      worst_name = c.name;
    }
    if (!(err < 1e-3)) {
      res.passed = false;
      res.detail = c.name + " relative error " + std::to_string(err);
      res.counterexample = {{"op", c.name}, {"relative_error", err}};
      return res;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "worst relative error %.2e (%s)", worst, worst_name.c_str());
  res.detail = buf;
  return res;
}

SuiteResult suite_profiler(const VerifyOptions&) {
  SuiteResult res;
  res.suite = "profiler";
  NetworkSpec spec;
  spec.attention.kind = AttentionKind::kNone;
  CostReport cnn = profile_static(build_cnn(spec, 0));
  CostReport snn = profile_static(build_snn(spec, 0));
  EnergyModel e;
  const double snn_uj = energy_joules(e, 1170040.0, 0.3966 * 4e6 + 0.4311 * 1e4) * 1e6;
  const double cnn_uj = energy_joules(e, 4810040.0, 0.0) * 1e6;
  struct Check {
    const char* what;
    double got, want, tolerance;
  };
  const Check checks[] = {{"CNN MAC total", static_cast<double>(cnn.mac_total()), 4810040.0, 0.0},
                          {"SNN AC-conv static", static_cast<double>(snn.static_of("conv2")), 4000000.0, 0.0},
                          {"SNN AC-fc static", static_cast<double>(snn.static_of("fc1")), 10000.0, 0.0},
                          {"SNN energy (uJ) vs 7.165", snn_uj, 7.165, 0.1 * 7.165},
                          {"CNN energy (uJ) vs 23.569", cnn_uj, 23.569, 0.1 * 23.569}};
  for (const auto& c : checks) {
    ++res.checks;
    if (std::abs(c.got - c.want) > c.tolerance) {
      res.passed = false;
      res.detail = c.what;
      res.counterexample = {{"check", c.what}, {"got", c.got}, {"expected", c.want}, {"tolerance", c.tolerance}};
      return res;
    }
  }
  res.detail = "MAC 4810040, AC 4000000/10000, energy " + format_microjoules(snn_uj * 1e-6) + " / " +
               format_microjoules(cnn_uj * 1e-6) + " uJ";
  return res;
}

SuiteResult suite_data(const VerifyOptions& o) {
  SuiteResult res;
  res.suite = "data";
  DatasetManifest manifest;
  std::vector<Trial> trials;
  std::string source;
  if (!o.dataset.empty()) {
    Dataset d = Dataset::open(o.dataset);
    manifest = d.manifest();
    trials = d.load_all();
    source = o.dataset.string();
  } else {
    SynthConfig sc;
    sc.seed = o.seed;
    sc.subjects = 3;
    sc.trials_per_subject = 20;
    SynthDataset a = synth_generate(sc);
    SynthDataset b = synth_generate(sc);
    ++res.checks;
    for (std::size_t i = 0; i < a.trials.size(); ++i) {
      if (a.trials[i].signal != b.trials[i].signal) {
        res.passed = false;
        res.detail = "generator is not deterministic";
        res.counterexample = {{"trial", a.trials[i].ref.key()}};
        return res;
      }
    }
    std::size_t correct = 0;
    for (const auto& t : a.trials) correct += (oracle_feature(t, sc) > 0.0) == (t.ref.label == 1) ? 1 : 0;
    ++res.checks;
    if (correct != a.trials.size()) {
      res.passed = false;
      res.detail = "oracle feature does not separate difficulty-0 classes";
      res.counterexample = {{"correct", correct}, {"total", a.trials.size()}};
      return res;
    }
    manifest = a.manifest;
    trials = a.trials;
    source = "generated set";
  }
  manifest.validate();
  ++res.checks;
  for (const auto& s : manifest.subjects) {
    std::size_t ones = 0;
    for (const auto& t : s.trials) ones += t.label == 1 ? 1 : 0;
    std::size_t zeros = s.trials.size() - ones;
    if (!manifest.synthetic.is_null() && (ones > zeros + 1 || zeros > ones + 1)) {
      res.passed = false;
      res.detail = "labels of subject " + s.id + " are unbalanced";
      res.counterexample = {{"subject", s.id}, {"class0", zeros}, {"class1", ones}};
      return res;
    }
  }
  if (manifest.subjects.size() >= 2) {
    for (const auto& plan : loso_splits(manifest)) {
      ++res.checks;
      std::vector<std::string> keys;
      for (const auto& t : plan.train) {
        if (t.subject == plan.held_out) {
          res.passed = false;
          res.detail = "held-out subject in training side of split " + plan.held_out;
          res.counterexample = {{"split", plan.held_out}, {"trial", t.key()}};
          return res;
        }
        keys.push_back(t.key());
      }
      for (const auto& t : plan.test) {
        if (t.subject != plan.held_out) {
          res.passed = false;
          res.detail = "foreign subject on the test side of split " + plan.held_out;
          res.counterexample = {{"split", plan.held_out}, {"trial", t.key()}};
          return res;
        }
        keys.push_back(t.key());
      }
      std::sort(keys.begin(), keys.end());
      if (keys.size() != manifest.trial_count() || std::adjacent_find(keys.begin(), keys.end()) != keys.end()) {
        res.passed = false;
        res.detail = "split " + plan.held_out + " is not a partition of the trials";
        res.counterexample = {{"split", plan.held_out}};
        return res;
      }
    }
  }
  ++res.checks;
  for (const auto& t : trials) {
    if (t.signal.size() != manifest.channels * manifest.samples ||
        !std::all_of(t.signal.begin(), t.signal.end(), [](float v) { return std::isfinite(v); })) {
      res.passed = false;
      res.detail = "trial " + t.ref.key() + " has wrong extents or non-finite samples";
      res.counterexample = {{"trial", t.ref.key()}};
      return res;
    }
  }
  res.detail = source + ": " + std::to_string(manifest.trial_count()) + " trials, " +
               std::to_string(manifest.subjects.size()) + " subjects";
  return res;
}

}  // namespace

const std::vector<std::string>& verify_suite_names() {
  static const std::vector<std::string> names{"props1", "nofire", "gradients", "attention", "fd", "profiler", "data"};
  return names;
}

SuiteResult run_verify_suite(const std::string& name, const VerifyOptions& options) {
  if (name == "props1") return suite_props1(options);
  if (name == "nofire") return suite_nofire(options);
  if (name == "gradients") return suite_gradients(options);
  if (name == "attention") return suite_attention(options);
  if (name == "fd") return suite_fd(options);
  if (name == "profiler") return suite_profiler(options);
  if (name == "data") return suite_data(options);
  throw ConfigError("unknown verify suite '" + name + "'");
}

std::string render_verify_table(const std::vector<SuiteResult>& results) {
  std::ostringstream out;
  char line[512];
  std::snprintf(line, sizeof(line), "%-10s %7s  %-4s  %s\n", "suite", "checks", "ok", "detail");
  out << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof(line), "%-10s %7zu  %-4s  %s\n", r.suite.c_str(), r.checks, r.passed ? "PASS" : "FAIL",
                  r.detail.c_str());
    out << line;
  }
  return out.str();
}

}  // namespace nisnn
