#include "nisnn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "nisnn/errors.hpp"

namespace nisnn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'N', 'I', 'S', 'N', 'N', 'C', 'K', 'P'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const char* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(const unsigned char* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  auto it = std::find_if(entries.begin(), entries.end(), [&](const CheckpointEntry& e) { return e.name == name; });
  return it == entries.end() ? nullptr : &*it;
}

const CheckpointEntry& Checkpoint::at(const std::string& name) const {
  const CheckpointEntry* e = find(name);
  if (!e) throw CheckpointError("checkpoint has no entry '" + name + "'");
  return *e;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put(kCheckpointVersion);
  std::string meta = ckpt.meta.dump();
  w.put(static_cast<std::uint32_t>(meta.size()));
  w.put_bytes(meta.data(), meta.size());
  w.put(static_cast<std::uint32_t>(ckpt.entries.size()));
  std::uint64_t offset = 0;
  for (const auto& e : ckpt.entries) {
    if (shape_numel(e.shape) != e.values.size()) {
      throw CheckpointError("entry '" + e.name + "' shape " + shape_str(e.shape) + " does not match its values");
    }
    w.put(static_cast<std::uint32_t>(e.name.size()));
    w.put_bytes(e.name.data(), e.name.size());
    w.put(static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t d : e.shape) w.put(static_cast<std::uint32_t>(d));
    w.put(offset);
    w.put(static_cast<std::uint64_t>(e.values.size()));
    offset += e.values.size();
  }
  std::vector<unsigned char> payload(offset * sizeof(float));
  std::size_t pos = 0;
  for (const auto& e : ckpt.entries) {
    std::memcpy(payload.data() + pos, e.values.data(), e.values.size() * sizeof(float));
    pos += e.values.size() * sizeof(float);
  }
  w.put(static_cast<std::uint64_t>(payload.size()));
  w.put_bytes(payload.data(), payload.size());
  w.put(fnv1a64(payload.data(), payload.size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));
  if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
  }
  auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  auto meta_len = r.get<std::uint32_t>();
  const char* meta = r.take(meta_len);
  try {
    ckpt.meta = nlohmann::json::parse(meta, meta + meta_len);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  auto count = r.get<std::uint32_t>();
  struct Slot {
    std::uint64_t offset, count;
  };
  std::vector<Slot> slots;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    auto name_len = r.get<std::uint32_t>();
    e.name.assign(r.take(name_len), name_len);
    auto rank = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(r.get<std::uint32_t>());
    Slot s{r.get<std::uint64_t>(), r.get<std::uint64_t>()};
    if (s.count != shape_numel(e.shape)) throw CheckpointError("entry '" + e.name + "' has inconsistent extents");
    slots.push_back(s);
    ckpt.entries.push_back(std::move(e));
  }
  auto payload_len = r.get<std::uint64_t>();
  const auto* payload = reinterpret_cast<const unsigned char*>(r.take(payload_len));
  auto checksum = r.get<std::uint64_t>();
  if (checksum != fnv1a64(payload, payload_len)) throw CheckpointError("checkpoint checksum mismatch");
  if (r.remaining() != 0) throw CheckpointError("trailing bytes after checkpoint checksum");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if ((slots[i].offset + slots[i].count) * sizeof(float) > payload_len) {
      throw CheckpointError("entry '" + ckpt.entries[i].name + "' points outside the payload");
    }
    ckpt.entries[i].values.resize(slots[i].count);
    std::memcpy(ckpt.entries[i].values.data(), payload + slots[i].offset * sizeof(float),
                slots[i].count * sizeof(float));
  }
  return ckpt;
}

nlohmann::json spec_to_json(const NetworkSpec& s) {
  return {{"family", std::string(to_string(s.family))},
          {"channels", s.channels},
          {"timepieces", s.timepieces},
          {"steps", s.steps},
          {"attention", std::string(to_string(s.attention.kind))},
          {"d1", s.attention.d1},
          {"d2", s.attention.d2},
          {"d", s.attention.d},
          {"alpha_init", s.attention.alpha_init},
          {"tau", s.tau},
          {"delta_t", s.delta_t},
          {"v_th", s.v_th},
          {"encoder_kernel", s.encoder_kernel},
          {"classifier_kernel", s.classifier_kernel},
          {"hidden", s.hidden},
          {"classes", s.classes}};
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
  try {
    NetworkSpec s;
    s.family = parse_family(j.at("family").get<std::string>());
    s.channels = j.at("channels").get<std::size_t>();
    s.timepieces = j.at("timepieces").get<std::size_t>();
    s.steps = j.at("steps").get<std::size_t>();
    s.attention.kind = parse_attention_kind(j.at("attention").get<std::string>());
    s.attention.d1 = j.at("d1").get<std::size_t>();
    s.attention.d2 = j.at("d2").get<std::size_t>();
    s.attention.d = j.at("d").get<std::size_t>();
    s.attention.alpha_init = j.at("alpha_init").get<float>();
    s.tau = j.at("tau").get<double>();
    s.delta_t = j.at("delta_t").get<double>();
    s.v_th = j.at("v_th").get<double>();
    s.encoder_kernel = j.at("encoder_kernel").get<std::size_t>();
    s.classifier_kernel = j.at("classifier_kernel").get<std::size_t>();
    s.hidden = j.at("hidden").get<std::size_t>();
    s.classes = j.at("classes").get<std::size_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad network spec in checkpoint: ") + e.what());
  }
}

void append_model_state(Checkpoint& ckpt, Model& model) {
  ckpt.meta["spec"] = spec_to_json(model.spec());
  for (const auto& [name, t] : model.parameters()) {
    ckpt.entries.push_back({"param/" + name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())});
  }
  for (const auto& b : model.buffers()) {
    ckpt.entries.push_back({"buffer/" + b.name, {b.values->size()}, *b.values});
  }
}

void load_model_state(const Checkpoint& ckpt, Model& model) {
  for (auto& [name, t] : model.parameters()) {
    const auto& e = ckpt.at("param/" + name);
    if (e.shape != t.shape()) {
      throw CheckpointError("parameter '" + name + "' is " + shape_str(e.shape) + " in the checkpoint, model has " +
                            shape_str(t.shape()));
    }
    std::copy(e.values.begin(), e.values.end(), t.mutable_data().begin());
  }
  for (auto& b : model.buffers()) {
    const auto& e = ckpt.at("buffer/" + b.name);
    if (e.values.size() != b.values->size()) throw CheckpointError("buffer '" + b.name + "' has the wrong size");
    *b.values = e.values;
  }
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("spec")) throw CheckpointError("checkpoint carries no network spec");
  Model model = build_model(spec_from_json(ckpt.meta["spec"]), 0);
  load_model_state(ckpt, model);
  return model;
}

}  // namespace nisnn
