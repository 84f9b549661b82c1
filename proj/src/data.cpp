#include "nisnn/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "nisnn/errors.hpp"
#include "nisnn/nn.hpp"

namespace nisnn {

static_assert(std::endian::native == std::endian::little, "trial files assume a little-endian host");

namespace fs = std::filesystem;

std::vector<TrialRef> DatasetManifest::trials() const {
  std::vector<TrialRef> out;
  for (const auto& s : subjects) {
    for (const auto& t : s.trials) out.push_back({s.id, t.id, t.label});
  }
  return out;
}

std::size_t DatasetManifest::trial_count() const {
  std::size_t n = 0;
  for (const auto& s : subjects) n += s.trials.size();
  return n;
}

void DatasetManifest::validate() const {
  if (channels == 0 || samples == 0) throw IngestError("manifest needs positive channels and samples");
  if (!channel_names.empty() && channel_names.size() != channels) {
    throw IngestError("manifest lists " + std::to_string(channel_names.size()) + " channel names for " +
                      std::to_string(channels) + " channels");
  }
  std::set<std::string> subject_ids;
  for (const auto& s : subjects) {
    if (s.id.empty()) throw IngestError("manifest has a subject with an empty id");
    if (!subject_ids.insert(s.id).second) throw IngestError("duplicate subject id '" + s.id + "'");
    std::set<std::string> trial_ids;
    for (const auto& t : s.trials) {
      if (t.id.empty()) throw IngestError("subject '" + s.id + "' has a trial with an empty id");
      if (!trial_ids.insert(t.id).second) {
        throw IngestError("duplicate trial id '" + t.id + "' for subject '" + s.id + "'");
      }
      if (std::find(labels.begin(), labels.end(), t.label) == labels.end()) {
        throw IngestError("trial '" + s.id + "_" + t.id + "' has label " + std::to_string(t.label) +
                          " outside the label set");
      }
    }
  }
}

nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json subjects = nlohmann::json::array();
  for (const auto& s : m.subjects) {
    nlohmann::json trials = nlohmann::json::array();
    for (const auto& t : s.trials) trials.push_back({{"id", t.id}, {"label", t.label}});
    subjects.push_back({{"id", s.id}, {"trials", trials}});
  }
  nlohmann::json j = {{"schema_version", kManifestSchemaVersion},
                      {"name", m.name},
                      {"channels", m.channels},
                      {"samples_per_trial", m.samples},
                      {"sample_rate_hz", m.sample_rate_hz},
                      {"labels", m.labels},
                      {"channel_names", m.channel_names},
                      {"downsampling", m.downsampling},
                      {"sample_format", "f32le row-major channels x samples"},
                      {"subjects", subjects}};
  if (!m.synthetic.is_null()) j["synthetic"] = m.synthetic;
  return j;
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    int version = j.at("schema_version").get<int>();
    if (version != kManifestSchemaVersion) {
      throw IngestError("unsupported manifest schema_version " + std::to_string(version));
    }
    m.name = j.at("name").get<std::string>();
    m.channels = j.at("channels").get<std::size_t>();
    m.samples = j.at("samples_per_trial").get<std::size_t>();
    m.sample_rate_hz = j.value("sample_rate_hz", 0.0);
    m.labels = j.at("labels").get<std::vector<int>>();
    m.channel_names = j.value("channel_names", std::vector<std::string>{});
    m.downsampling = j.value("downsampling", std::string("uniform-index"));
    for (const auto& s : j.at("subjects")) {
      SubjectEntry entry{s.at("id").get<std::string>(), {}};
      for (const auto& t : s.at("trials")) entry.trials.push_back({t.at("id").get<std::string>(), t.at("label").get<int>()});
      m.subjects.push_back(std::move(entry));
    }
    if (j.contains("synthetic")) m.synthetic = j["synthetic"];
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

namespace {

fs::path trial_path(const fs::path& dir, const TrialRef& ref) { return dir / (ref.key() + ".f32"); }

void write_floats(const fs::path& path, const std::vector<float>& values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) throw IngestError("failed writing " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IngestError(path.string() + ": " + e.what());
  }
}

}  // namespace

void write_dataset(const fs::path& dir, const DatasetManifest& manifest, const std::vector<Trial>& trials) {
  manifest.validate();
  if (trials.size() != manifest.trial_count()) {
    throw IngestError("dataset has " + std::to_string(trials.size()) + " trials but the manifest lists " +
                      std::to_string(manifest.trial_count()));
  }
  fs::create_directories(dir);
  for (const auto& t : trials) {
    if (t.channels != manifest.channels || t.samples != manifest.samples ||
        t.signal.size() != manifest.channels * manifest.samples) {
      throw IngestError("trial '" + t.ref.key() + "' is not " + std::to_string(manifest.channels) + "x" +
                        std::to_string(manifest.samples));
    }
    write_floats(trial_path(dir, t.ref), t.signal);
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw IngestError("cannot write " + (dir / "manifest.json").string());
  out << manifest_to_json(manifest).dump(2) << '\n';
}

Dataset Dataset::open(const fs::path& dir) {
  Dataset d;
  d.root_ = dir;
  fs::path manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) throw IngestError("no manifest.json in " + dir.string());
  d.manifest_ = manifest_from_json(read_json(manifest));
  const auto bytes = d.manifest_.channels * d.manifest_.samples * sizeof(float);
  for (const auto& ref : d.manifest_.trials()) {
    fs::path p = trial_path(dir, ref);
    if (!fs::exists(p)) throw IngestError("missing trial file " + p.string());
    if (fs::file_size(p) != bytes) {
      throw IngestError(p.string() + " has " + std::to_string(fs::file_size(p)) + " bytes, expected " +
                        std::to_string(bytes));
    }
  }
  return d;
}

Trial Dataset::load(const TrialRef& ref) const {
  Trial t{ref, manifest_.channels, manifest_.samples, std::vector<float>(manifest_.channels * manifest_.samples)};
  fs::path p = trial_path(root_, ref);
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IngestError("cannot open " + p.string());
  in.read(reinterpret_cast<char*>(t.signal.data()), static_cast<std::streamsize>(t.signal.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(t.signal.size() * sizeof(float))) {
    throw IngestError(p.string() + " is truncated");
  }
  for (std::size_t i = 0; i < t.signal.size(); ++i) {
    if (!std::isfinite(t.signal[i])) {
      throw IngestError(p.string() + ": non-finite value at channel " + std::to_string(i / t.samples) + ", sample " +
                        std::to_string(i % t.samples));
    }
  }
  return t;
}

std::vector<Trial> Dataset::load_all() const {
  std::vector<Trial> out;
  for (const auto& ref : manifest_.trials()) out.push_back(load(ref));
  return out;
}

namespace {

std::vector<float> parse_csv(const fs::path& path, std::size_t rows, std::size_t cols) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  const std::string where = path.filename().string();
  const std::string expected = "expected " + std::to_string(rows) + " rows x " + std::to_string(cols) + " columns";
  std::vector<float> values;
  values.reserve(rows * cols);
  std::string line;
  std::size_t r = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (r == rows) throw IngestError(where + ": more than " + std::to_string(rows) + " rows; " + expected);
    std::size_t c = 0;
    std::size_t pos = 0;
    while (true) {
      std::size_t end = line.find(',', pos);
      std::string_view field(line.data() + pos, (end == std::string::npos ? line.size() : end) - pos);
      while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
      while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
      float v = 0.0F;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
        throw IngestError(where + ": row " + std::to_string(r) + ", column " + std::to_string(c) +
                          ": not a decimal number '" + std::string(field) + "'");
      }
      if (!std::isfinite(v)) {
        throw IngestError(where + ": row " + std::to_string(r) + ", column " + std::to_string(c) +
                          ": non-finite value");
      }
      values.push_back(v);
      ++c;
      if (end == std::string::npos) break;
      pos = end + 1;
    }
    if (c != cols) {
      throw IngestError(where + ": row " + std::to_string(r) + " has " + std::to_string(c) + " columns; " + expected);
    }
    ++r;
  }
  if (r != rows) throw IngestError(where + ": found " + std::to_string(r) + " rows; " + expected);
  return values;
}

}  // namespace

DatasetManifest import_csv(const fs::path& src, const fs::path& dst) {
  nlohmann::json j = read_json(src / "manifest.json");
  DatasetManifest m;
  std::vector<Trial> trials;
  try {
    m.name = j.at("name").get<std::string>();
    m.channels = j.at("channels").get<std::size_t>();
    std::size_t samples = j.at("samples").get<std::size_t>();
    m.samples = j.value("target_samples", samples);
    m.sample_rate_hz = j.value("sample_rate_hz", 0.0);
    if (m.samples != samples && m.sample_rate_hz > 0.0) {
      m.sample_rate_hz *= static_cast<double>(m.samples) / static_cast<double>(samples);
    }
    m.channel_names = j.value("channel_names", std::vector<std::string>{});
    if (m.channels == 0 || samples == 0) throw IngestError("CSV manifest needs positive channels and samples");
    std::map<std::string, std::size_t> subject_index;
    std::set<std::string> seen;
    for (const auto& t : j.at("trials")) {
      TrialRef ref{t.at("subject").get<std::string>(), t.at("trial").get<std::string>(), t.at("label").get<int>()};
      if (!seen.insert(ref.key()).second) {
        throw IngestError("duplicate trial id '" + ref.id + "' for subject '" + ref.subject + "'");
      }
      auto [it, inserted] = subject_index.emplace(ref.subject, m.subjects.size());
      if (inserted) m.subjects.push_back({ref.subject, {}});
      m.subjects[it->second].trials.push_back({ref.id, ref.label});
      Trial trial{ref, m.channels, samples,
                  parse_csv(src / t.at("file").get<std::string>(), m.channels, samples)};
      if (m.samples != samples) trial = downsample(trial, m.samples);
      trials.push_back(std::move(trial));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IngestError((src / "manifest.json").string() + ": " + e.what());
  }
  write_dataset(dst, m, trials);
  return m;
}

Trial downsample(const Trial& trial, std::size_t target) {
  if (target == 0 || target > trial.samples) {
    throw ContractError("cannot downsample " + std::to_string(trial.samples) + " samples to " +
                        std::to_string(target));
  }
  Trial out{trial.ref, trial.channels, target, std::vector<float>(trial.channels * target)};
  for (std::size_t i = 0; i < target; ++i) {
    auto src = static_cast<std::size_t>(
        std::lround(static_cast<double>(i) * static_cast<double>(trial.samples) / static_cast<double>(target)));
    src = std::min(src, trial.samples - 1);
    for (std::size_t c = 0; c < trial.channels; ++c) out.signal[c * target + i] = trial.at(c, src);
  }
  return out;
}

Tensor segment(const Trial& trial, std::size_t timepieces, std::size_t steps) {
  if (timepieces * steps != trial.samples) {
    throw ConfigError("S*T must equal D: " + std::to_string(timepieces) + "*" + std::to_string(steps) +
                      " != " + std::to_string(trial.samples));
  }
  // Row-major C x D already is C x S x T.
  return Tensor::from_data({trial.channels, timepieces, steps}, trial.signal);
}

Tensor make_batch(const std::vector<const Trial*>& trials, std::size_t timepieces, std::size_t steps) {
  if (trials.empty()) throw ContractError("cannot batch zero trials");
  const std::size_t c = trials.front()->channels;
  std::vector<float> data;
  data.reserve(trials.size() * c * timepieces * steps);
  for (const Trial* t : trials) {
    if (t->channels != c) throw DimensionError("trials in a batch disagree on the channel count");
    auto seg = segment(*t, timepieces, steps);
    data.insert(data.end(), seg.data().begin(), seg.data().end());
  }
  return Tensor::from_data({trials.size(), c, timepieces, steps}, std::move(data));
}

std::vector<SplitPlan> loso_splits(const DatasetManifest& manifest) {
  if (manifest.subjects.size() < 2) throw ContractError("leave-one-subject-out needs at least two subjects");
  std::vector<const SubjectEntry*> ordered;
  for (const auto& s : manifest.subjects) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<SplitPlan> plans;
  for (const SubjectEntry* held : ordered) {
    SplitPlan plan;
    plan.held_out = held->id;
    for (const SubjectEntry* s : ordered) {
      auto& side = s == held ? plan.test : plan.train;
      for (const auto& t : s->trials) side.push_back({s->id, t.id, t.label});
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

SynthWindow synth_window(std::size_t channels, std::size_t samples) {
  SynthWindow w;
  std::size_t length = std::max<std::size_t>(1, samples / 4);
  w.begin = (samples - length) / 2;
  w.end = w.begin + length;
  for (std::size_t c = 0; c < channels; c += 2) w.channels.push_back(c);
  return w;
}

SynthDataset synth_generate(const SynthConfig& cfg) {
  if (cfg.subjects == 0 || cfg.trials_per_subject == 0 || cfg.channels == 0 || cfg.samples == 0) {
    throw ConfigError("synthetic dataset extents must be positive");
  }
  if (!(cfg.difficulty >= 0.0) || !(cfg.sample_rate_hz > 0.0)) {
    throw ConfigError("synthetic difficulty must be >= 0 and the sample rate positive");
  }
  SynthDataset out;
  DatasetManifest& m = out.manifest;
  m.name = "synthetic-seed" + std::to_string(cfg.seed);
  m.channels = cfg.channels;
  m.samples = cfg.samples;
  m.sample_rate_hz = cfg.sample_rate_hz;
  for (std::size_t c = 0; c < cfg.channels; ++c) m.channel_names.push_back("ch" + std::to_string(c));
  const SynthWindow win = synth_window(cfg.channels, cfg.samples);
  m.synthetic = {{"seed", cfg.seed},
                 {"difficulty", cfg.difficulty},
                 {"freq0_hz", cfg.freq0},
                 {"freq1_hz", cfg.freq1},
                 {"window_begin", win.begin},
                 {"window_end", win.end},
                 {"channels", win.channels}};

  Rng rng(cfg.seed);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t s = 0; s < cfg.subjects; ++s) {
    char sid[32];
    std::snprintf(sid, sizeof(sid), "s%02zu", s + 1);
    SubjectEntry subject{sid, {}};
    const double gain = 0.8 + 0.4 * rng.uniform_double();
    std::vector<int> labels(cfg.trials_per_subject);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
    for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[rng.below(i)]);
    for (std::size_t i = 0; i < cfg.trials_per_subject; ++i) {
      char tid[32];
      std::snprintf(tid, sizeof(tid), "t%03zu", i);
      Trial trial{{sid, tid, labels[i]}, cfg.channels, cfg.samples,
                  std::vector<float>(cfg.channels * cfg.samples, 0.0F)};
      const double freq = labels[i] == 1 ? cfg.freq1 : cfg.freq0;
      const double phase = two_pi * rng.uniform_double();
      for (std::size_t c : win.channels) {
        for (std::size_t n = win.begin; n < win.end; ++n) {
          double t = static_cast<double>(n - win.begin) / cfg.sample_rate_hz;
          trial.signal[c * cfg.samples + n] = static_cast<float>(gain * std::sin(two_pi * freq * t + phase));
        }
      }
      if (cfg.difficulty > 0.0) {
        for (float& v : trial.signal) v += static_cast<float>(cfg.difficulty * rng.normal());
      }
      subject.trials.push_back({tid, labels[i]});
      out.trials.push_back(std::move(trial));
    }
    m.subjects.push_back(std::move(subject));
  }
  m.validate();
  return out;
}

double oracle_feature(const Trial& trial, const SynthConfig& cfg) {
  const SynthWindow win = synth_window(trial.channels, trial.samples);
  auto power = [&](double freq) {
    double total = 0.0;
    for (std::size_t c : win.channels) {
      double re = 0.0;
      double im = 0.0;
      for (std::size_t n = win.begin; n < win.end; ++n) {
        double angle = 2.0 * std::numbers::pi * freq * static_cast<double>(n - win.begin) / cfg.sample_rate_hz;
        re += trial.at(c, n) * std::cos(angle);
        im -= trial.at(c, n) * std::sin(angle);
      }
      total += re * re + im * im;
    }
    return total;
  };
  return power(cfg.freq1) - power(cfg.freq0);
}

}  // namespace nisnn
