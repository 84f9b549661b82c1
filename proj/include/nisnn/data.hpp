#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "nisnn/tensor.hpp"

namespace nisnn {

inline constexpr int kManifestSchemaVersion = 1;

struct TrialMeta {
  std::string id;
  int label = 0;
};

struct SubjectEntry {
  std::string id;
  std::vector<TrialMeta> trials;
};

/// Reference to one stored trial.
struct TrialRef {
  std::string subject;
  std::string id;
  int label = 0;

  std::string key() const { return subject + "_" + id; }
  bool operator==(const TrialRef&) const = default;
};

struct DatasetManifest {
  std::string name;
  std::size_t channels = 0;
  std::size_t samples = 0;  // D, samples per trial
  double sample_rate_hz = 0.0;
  std::vector<int> labels{0, 1};
  std::vector<std::string> channel_names;
  std::string downsampling = "uniform-index";
  std::vector<SubjectEntry> subjects;
  nlohmann::json synthetic;  // generator parameters, null for imported data

  /// All trials, subject by subject in manifest order.
  std::vector<TrialRef> trials() const;
  std::size_t trial_count() const;
  /// Throws IngestError on empty extents, unknown labels or duplicate ids.
  void validate() const;
};

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

/// A C x D signal, row-major.
struct Trial {
  TrialRef ref;
  std::size_t channels = 0;
  std::size_t samples = 0;
  std::vector<float> signal;

  float at(std::size_t c, std::size_t i) const { return signal[c * samples + i]; }
};

/// Native store: <dir>/manifest.json and <dir>/<subject>_<trial>.f32
/// (little-endian float32, row-major C x D).
void write_dataset(const std::filesystem::path& dir, const DatasetManifest& manifest,
                   const std::vector<Trial>& trials);

class Dataset {
 public:
  /// Reads and validates the manifest; trial files are checked for size.
  static Dataset open(const std::filesystem::path& dir);

  const DatasetManifest& manifest() const { return manifest_; }
  const std::filesystem::path& root() const { return root_; }
  Trial load(const TrialRef& ref) const;
  std::vector<Trial> load_all() const;

 private:
  std::filesystem::path root_;
  DatasetManifest manifest_;
};

/// Ingests a CSV dataset into the native store at `dst`.
///
/// `src/manifest.json` holds {"name", "channels", "samples", optional
/// "sample_rate_hz", "channel_names", "target_samples", and "trials":
/// [{"subject", "trial", "label", "file"}]}. Each file has `channels` rows of
/// `samples` comma-separated decimals. With target_samples set, trials are
/// downsampled on the way in.
DatasetManifest import_csv(const std::filesystem::path& src, const std::filesystem::path& dst);

/// Uniform index selection: output sample i is input sample round(i*D/target).
Trial downsample(const Trial& trial, std::size_t target);

/// [C,S,T] view of a trial; timepiece s holds samples [s*T, (s+1)*T).
Tensor segment(const Trial& trial, std::size_t timepieces, std::size_t steps);

/// Stacks segmented trials into [B,C,S,T].
Tensor make_batch(const std::vector<const Trial*>& trials, std::size_t timepieces, std::size_t steps);

struct SplitPlan {
  std::string held_out;
  std::vector<TrialRef> train;
  std::vector<TrialRef> test;
};

/// One plan per subject, ordered by subject id.
std::vector<SplitPlan> loso_splits(const DatasetManifest& manifest);

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t subjects = 3;
  std::size_t trials_per_subject = 60;
  std::size_t channels = 20;
  std::size_t samples = 400;
  double difficulty = 0.0;  // std of the additive noise
  double sample_rate_hz = 100.0;
  double freq0 = 10.0;  // class 0 oscillation
  double freq1 = 25.0;  // class 1 oscillation
};

struct SynthDataset {
  DatasetManifest manifest;
  std::vector<Trial> trials;
};

/// Two classes told apart by the frequency of a unit oscillation placed in a
/// centred window of D/4 samples on the even-indexed channels, scaled by a
/// per-subject gain in [0.8, 1.2], plus N(0, difficulty^2) noise everywhere.
SynthDataset synth_generate(const SynthConfig& cfg);

/// Window [begin, end) of the injected oscillation in a synthetic trial.
struct SynthWindow {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::vector<std::size_t> channels;
};
SynthWindow synth_window(std::size_t channels, std::size_t samples);

/// Band power at freq1 minus band power at freq0, summed over the
/// discriminative channels inside the window. Positive means class 1.
double oracle_feature(const Trial& trial, const SynthConfig& cfg);

}  // namespace nisnn
