#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "nisnn/checkpoint.hpp"
#include "nisnn/data.hpp"
#include "nisnn/model.hpp"
#include "nisnn/tensor.hpp"

namespace nisnn {

enum class Schedule { kDirect, kCnnPretrainThenSnn };
std::string_view to_string(Schedule s);
Schedule parse_schedule(std::string_view name);

struct TrainConfig {
  float lr = 0.001F;
  std::size_t epochs = 20;           // epochs of the target network
  std::size_t pretrain_epochs = 20;  // CNN epochs before transfer (pretrain schedule only)
  std::size_t batch = 64;
  std::uint64_t seed = 0;
  float beta1 = 0.9F;
  float beta2 = 0.999F;
  float eps = 1e-8F;
  Schedule schedule = Schedule::kDirect;

  void validate() const;
};

/// One-hot [B, classes] from integer labels.
Tensor one_hot(const std::vector<int>& labels, std::size_t classes);

/// Mean softmax cross-entropy of logits [B,K] against one-hot labels [B,K];
/// log probabilities are clamped at log(1e-12).
Tensor ce_loss(const Tensor& logits, const Tensor& labels_one_hot);

/// Row-wise argmax, ties resolved toward the lower class index.
std::vector<int> predict(const Tensor& logits);
double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every parameter from its grad slot.
/// Parameters without a gradient are treated as having a zero gradient.
/// Throws NumericError naming the parameter on a non-finite gradient.
void adam_step(const NamedTensors& params, AdamState& state, const TrainConfig& cfg);

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t count = 0;
  std::vector<std::vector<std::uint64_t>> confusion;  // [true][predicted]
};

/// Inference-mode evaluation; integer counts make it batch-order independent.
EvalResult evaluate(Model& model, const std::vector<const Trial*>& trials, std::size_t batch);

struct EpochRecord {
  std::string phase;  // "cnn" or "snn"
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

std::string history_json_lines(const std::vector<EpochRecord>& history);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: write nothing
  const Checkpoint* resume = nullptr;
  /// Stop after this many epochs in total (0: run to completion). The
  /// training state is still checkpointed so the run can be resumed.
  std::size_t max_epochs = 0;
  std::ostream* log = nullptr;
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> history;
  EvalResult final_eval;
  std::vector<std::string> trained_on;  // trial keys seen by the optimizer
  Checkpoint state;                     // latest training state
  bool complete = false;
};

/// Trains on plan.train and reports test metrics on plan.test after every
/// epoch. Writes <out>/state.ckpt after every epoch, and on completion
/// <out>/model.ckpt and <out>/history.jsonl.
TrainResult train_loop(const NetworkSpec& spec, const std::vector<Trial>& trials, const SplitPlan& plan,
                       const TrainConfig& cfg, const TrainOptions& options = {});

}  // namespace nisnn
