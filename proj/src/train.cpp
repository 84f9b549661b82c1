#include "nisnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "nisnn/errors.hpp"
#include "nisnn/nn.hpp"
#include "nisnn/ops.hpp"

namespace nisnn {

std::string_view to_string(Schedule s) { return s == Schedule::kDirect ? "direct" : "cnn-pretrain-then-snn"; }

Schedule parse_schedule(std::string_view name) {
  if (name == "direct") return Schedule::kDirect;
  if (name == "cnn-pretrain-then-snn") return Schedule::kCnnPretrainThenSnn;
  throw ConfigError("unknown schedule '" + std::string(name) + "' (expected direct or cnn-pretrain-then-snn)");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0F)) throw ConfigError("train.lr must be positive");
  if (epochs == 0) throw ConfigError("train.epochs must be positive");
  if (batch == 0) throw ConfigError("train.batch must be positive");
  if (schedule == Schedule::kCnnPretrainThenSnn && pretrain_epochs == 0) {
    throw ConfigError("train.pretrain_epochs must be positive for the pretrain schedule");
  }
  if (!(beta1 >= 0.0F && beta1 < 1.0F) || !(beta2 >= 0.0F && beta2 < 1.0F) || !(eps > 0.0F)) {
    throw ConfigError("train.beta1/beta2 must lie in [0,1) and train.eps must be positive");
  }
}

Tensor one_hot(const std::vector<int>& labels, std::size_t classes) {
  std::vector<float> data(labels.size() * classes, 0.0F);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ContractError("label " + std::to_string(labels[i]) + " outside [0," + std::to_string(classes) + ")");
    }
    data[i * classes + static_cast<std::size_t>(labels[i])] = 1.0F;
  }
  return Tensor::from_data({labels.size(), classes}, std::move(data));
}

Tensor ce_loss(const Tensor& logits, const Tensor& labels) {
  if (logits.rank() != 2 || labels.shape() != logits.shape()) {
    throw DimensionError("ce_loss needs logits and one-hot labels of equal [B,K] shape, got " +
                         shape_str(logits.shape()) + " and " + shape_str(labels.shape()));
  }
  const std::size_t b = logits.dim(0);
  const std::size_t k = logits.dim(1);
  auto y = labels.data();
  for (std::size_t i = 0; i < b; ++i) {
    int ones = 0;
    for (std::size_t j = 0; j < k; ++j) {
      float v = y[i * k + j];
      if (v != 0.0F && v != 1.0F) throw ContractError("label row " + std::to_string(i) + " is not one-hot");
      ones += v == 1.0F ? 1 : 0;
    }
    if (ones != 1) throw ContractError("label row " + std::to_string(i) + " is not one-hot");
  }
  auto z = logits.data();
  auto probs = std::make_shared<std::vector<float>>(b * k);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const float* row = z.data() + i * k;
    float mx = *std::max_element(row, row + k);
    if (!std::isfinite(mx)) throw NumericError("ce_loss received non-finite logits");
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) {
      double p = std::exp(static_cast<double>(row[j] - mx)) / denom;
      (*probs)[i * k + j] = static_cast<float>(p);
      if (y[i * k + j] == 1.0F) total -= std::log(std::max(p, 1e-12));
    }
  }
  auto iy = labels.impl();
  return make_result("ce_loss", {}, {static_cast<float>(total / static_cast<double>(b))}, {logits},
                     [probs, iy, b](const Tape::Node& node) {
                       const float g = node.outputs[0]->grad[0] / static_cast<float>(b);
                       std::vector<float> dz(probs->size());
                       for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = g * ((*probs)[i] - iy->data[i]);
                       node.inputs[0]->accumulate_grad(dz);
                     });
}

std::vector<int> predict(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("predict needs [B,K] logits, got " + shape_str(logits.shape()));
  const std::size_t k = logits.dim(1);
  std::vector<int> out(logits.dim(0));
  auto z = logits.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (z[i * k + j] > z[i * k + best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) throw ContractError("accuracy needs equally long inputs");
  if (predictions.empty()) throw ContractError("accuracy of an empty set is undefined");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

void adam_step(const NamedTensors& params, AdamState& state, const TrainConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& [name, p] : params) {
      state.m.emplace_back(p.numel(), 0.0F);
      state.v.emplace_back(p.numel(), 0.0F);
    }
  }
  if (state.m.size() != params.size()) throw ContractError("optimizer state does not match the parameter list");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& [name, p] = params[k];
    if (state.m[k].size() != p.numel()) throw ContractError("optimizer state for '" + name + "' has the wrong size");
    for (float g : p.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + name + "'");
    }
  }
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const auto c1 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta1), t));
  const auto c2 = static_cast<float>(1.0 - std::pow(static_cast<double>(cfg.beta2), t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k].second;
    auto grad = p.grad();
    auto w = p.mutable_data();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      float g = grad.empty() ? 0.0F : grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0F - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0F - cfg.beta2) * g * g;
      float mhat = m[i] / c1;
      float vhat = v[i] / c2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

EvalResult evaluate(Model& model, const std::vector<const Trial*>& trials, std::size_t batch) {
  if (trials.empty()) throw ContractError("cannot evaluate on an empty trial set");
  if (batch == 0) throw ContractError("evaluation batch must be positive");
  NoGradScope no_grad;
  const NetworkSpec& spec = model.spec();
  EvalResult r;
  r.confusion.assign(spec.classes, std::vector<std::uint64_t>(spec.classes, 0));
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < trials.size(); start += batch) {
    std::vector<const Trial*> chunk(trials.begin() + static_cast<std::ptrdiff_t>(start),
                                    trials.begin() + static_cast<std::ptrdiff_t>(std::min(trials.size(), start + batch)));
    std::vector<int> labels;
    for (const Trial* t : chunk) labels.push_back(t->ref.label);
    Tensor logits = model.forward(make_batch(chunk, spec.timepieces, spec.steps), Mode::kInfer);
    loss_sum += static_cast<double>(ce_loss(logits, one_hot(labels, spec.classes)).item()) *
                static_cast<double>(chunk.size());
    auto pred = predict(logits);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      r.confusion[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(pred[i])] += 1;
      correct += pred[i] == labels[i] ? 1 : 0;
    }
  }
  r.count = trials.size();
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.count);
  r.loss = loss_sum / static_cast<double>(r.count);
  return r;
}

std::string history_json_lines(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const auto& e : history) {
    nlohmann::json j = {{"phase", e.phase},
                        {"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"test_loss", e.test_loss},
                        {"test_accuracy", e.test_accuracy}};
    out += j.dump() + "\n";
  }
  return out;
}

namespace {

nlohmann::json history_to_json(const std::vector<EpochRecord>& history) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& e : history) {
    a.push_back({{"phase", e.phase},
                 {"epoch", e.epoch},
                 {"train_loss", e.train_loss},
                 {"test_loss", e.test_loss},
                 {"test_accuracy", e.test_accuracy}});
  }
  return a;
}

std::vector<EpochRecord> history_from_json(const nlohmann::json& a) {
  std::vector<EpochRecord> out;
  for (const auto& j : a) {
    out.push_back({j.at("phase").get<std::string>(), j.at("epoch").get<std::size_t>(), j.at("train_loss").get<double>(),
                   j.at("test_loss").get<double>(), j.at("test_accuracy").get<double>()});
  }
  return out;
}

struct Phase {
  Family family;
  std::size_t epochs;
  std::uint64_t stream;  // seed stream for init and shuffling
};

Checkpoint make_state(Model& model, const AdamState& adam, const TrainConfig& cfg, const SplitPlan& plan,
                      const Phase& phase, std::size_t epochs_done, const std::vector<EpochRecord>& history) {
  Checkpoint c;
  c.meta["kind"] = "train-state";
  c.meta["phase"] = std::string(to_string(phase.family));
  c.meta["epoch"] = epochs_done;
  c.meta["seed"] = cfg.seed;
  c.meta["schedule"] = std::string(to_string(cfg.schedule));
  c.meta["held_out"] = plan.held_out;
  c.meta["optimizer_step"] = adam.step;
  c.meta["history"] = history_to_json(history);
  append_model_state(c, model);
  NamedTensors params = model.parameters();
  for (std::size_t k = 0; k < params.size() && k < adam.m.size(); ++k) {
    c.entries.push_back({"adam.m/" + params[k].first, params[k].second.shape(), adam.m[k]});
    c.entries.push_back({"adam.v/" + params[k].first, params[k].second.shape(), adam.v[k]});
  }
  return c;
}

void restore_adam(const Checkpoint& c, const NamedTensors& params, AdamState& adam) {
  adam = {};
  adam.step = c.meta.at("optimizer_step").get<std::uint64_t>();
  if (adam.step == 0) return;
  for (const auto& [name, p] : params) {
    adam.m.push_back(c.at("adam.m/" + name).values);
    adam.v.push_back(c.at("adam.v/" + name).values);
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

}  // namespace

TrainResult train_loop(const NetworkSpec& spec, const std::vector<Trial>& trials, const SplitPlan& plan,
                       const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  spec.validate();
  std::unordered_map<std::string, const Trial*> by_key;
  for (const Trial& t : trials) by_key.emplace(t.ref.key(), &t);
  auto resolve = [&](const std::vector<TrialRef>& refs, bool training) {
    std::vector<const Trial*> out;
    for (const auto& ref : refs) {
      if (training && ref.subject == plan.held_out) {
        throw ContractError("trial '" + ref.key() + "' of held-out subject '" + plan.held_out + "' in training set");
      }
      auto it = by_key.find(ref.key());
      if (it == by_key.end()) throw IngestError("trial '" + ref.key() + "' is not loaded");
      out.push_back(it->second);
    }
    return out;
  };
  const std::vector<const Trial*> train_set = resolve(plan.train, true);
  const std::vector<const Trial*> test_set = resolve(plan.test, false);
  if (train_set.empty()) throw ContractError("training set is empty");

  std::vector<Phase> phases;
  if (cfg.schedule == Schedule::kCnnPretrainThenSnn) {
    phases.push_back({Family::kCnn, cfg.pretrain_epochs, 1});
    phases.push_back({Family::kSnn, cfg.epochs, 2});
  } else {
    phases.push_back({spec.family, cfg.epochs, spec.family == Family::kCnn ? 1U : 2U});
  }

  TrainResult result;
  for (const Trial* t : train_set) result.trained_on.push_back(t->ref.key());

  std::size_t first_phase = 0;
  std::size_t resume_epoch = 0;
  if (options.resume) {
    const auto& meta = options.resume->meta;
    if (meta.value("kind", "") != "train-state") throw CheckpointError("checkpoint is not a training state");
    Family f = parse_family(meta.at("phase").get<std::string>());
    auto it = std::find_if(phases.begin(), phases.end(), [f](const Phase& p) { return p.family == f; });
    if (it == phases.end()) throw CheckpointError("checkpoint phase does not belong to this schedule");
    first_phase = static_cast<std::size_t>(it - phases.begin());
    resume_epoch = meta.at("epoch").get<std::size_t>();
    result.history = history_from_json(meta.at("history"));
  }

  std::size_t epochs_run = 0;
  Model previous;
  bool have_previous = false;
  for (std::size_t pi = first_phase; pi < phases.size(); ++pi) {
    const Phase& phase = phases[pi];
    NetworkSpec phase_spec = spec;
    phase_spec.family = phase.family;
    Model model = build_model(phase_spec, derive_seed(cfg.seed, phase.stream));
    AdamState adam;
    std::size_t start = 0;
    if (options.resume && pi == first_phase) {
      load_model_state(*options.resume, model);
      restore_adam(*options.resume, model.parameters(), adam);
      start = resume_epoch;
    } else if (have_previous) {
      transfer_weights_cnn_to_snn(previous, model);
    }
    NamedTensors params = model.parameters();

    for (std::size_t epoch = start; epoch < phase.epochs; ++epoch) {
      if (options.max_epochs != 0 && epochs_run == options.max_epochs) {
        result.model = model;
        return result;
      }
      std::vector<std::size_t> order(train_set.size());
      std::iota(order.begin(), order.end(), 0);
      Rng shuffle(derive_seed(cfg.seed, phase.stream * 1000003ULL + epoch));
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

      double loss_sum = 0.0;
      for (std::size_t startb = 0; startb < order.size(); startb += cfg.batch) {
        std::vector<const Trial*> chunk;
        std::vector<int> labels;
        for (std::size_t i = startb; i < std::min(order.size(), startb + cfg.batch); ++i) {
          chunk.push_back(train_set[order[i]]);
          labels.push_back(train_set[order[i]]->ref.label);
        }
        for (auto& [name, p] : params) p.zero_grad();
        Tape tape;
        Tensor loss;
        {
          TapeScope scope(tape);
          Tensor logits = model.forward(make_batch(chunk, spec.timepieces, spec.steps), Mode::kTrain);
          loss = ce_loss(logits, one_hot(labels, spec.classes));
        }
        backward(loss);
        adam_step(params, adam, cfg);
        loss_sum += static_cast<double>(loss.item()) * static_cast<double>(chunk.size());
      }
      EpochRecord rec{std::string(to_string(phase.family)), epoch + 1,
                      loss_sum / static_cast<double>(train_set.size()), 0.0, 0.0};
      if (!test_set.empty()) {
        EvalResult ev = evaluate(model, test_set, cfg.batch);
        rec.test_loss = ev.loss;
        rec.test_accuracy = ev.accuracy;
      }
      result.history.push_back(rec);
      ++epochs_run;
      if (options.log) {
        *options.log << "[" << plan.held_out << "] " << rec.phase << " epoch " << rec.epoch << "/" << phase.epochs
                     << " train_loss " << rec.train_loss << " test_acc " << rec.test_accuracy << '\n';
      }
      result.state = make_state(model, adam, cfg, plan, phase, epoch + 1, result.history);
      if (!options.out_dir.empty()) save_checkpoint(options.out_dir / "state.ckpt", result.state);
    }
    previous = model;
    have_previous = true;
  }

  result.model = previous;
  result.complete = true;
  if (!test_set.empty()) result.final_eval = evaluate(result.model, test_set, cfg.batch);
  if (!options.out_dir.empty()) {
    Checkpoint final_ckpt;
    final_ckpt.meta["kind"] = "model";
    final_ckpt.meta["seed"] = cfg.seed;
    final_ckpt.meta["held_out"] = plan.held_out;
    append_model_state(final_ckpt, result.model);
    save_checkpoint(options.out_dir / "model.ckpt", final_ckpt);
    write_text(options.out_dir / "history.jsonl", history_json_lines(result.history));
  }
  return result;
}

}  // namespace nisnn
