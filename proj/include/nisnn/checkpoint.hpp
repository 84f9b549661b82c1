#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "nisnn/model.hpp"
#include "nisnn/tensor.hpp"

namespace nisnn {

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

/// Binary container:
///   "NISNNCKP" | u32 version | u32 meta length | meta JSON (UTF-8)
///   u32 entry count | per entry: u32 name length, name, u32 rank, u32 dims...,
///                                u64 payload offset (floats), u64 count
///   u64 payload length (bytes) | payload (f32 little-endian)
///   u64 FNV-1a checksum of the payload
/// All integers little-endian.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
  /// Throws CheckpointError when absent.
  const CheckpointEntry& at(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::uint64_t fnv1a64(const unsigned char* data, std::size_t size);

nlohmann::json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);

/// Parameters ("param/<name>") and running statistics ("buffer/<name>") of
/// a model plus its spec under meta["spec"].
void append_model_state(Checkpoint& ckpt, Model& model);
/// Restores values written by append_model_state into an already-built
/// model of the same architecture.
void load_model_state(const Checkpoint& ckpt, Model& model);
/// Builds a model from meta["spec"] and restores its state.
Model model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace nisnn
