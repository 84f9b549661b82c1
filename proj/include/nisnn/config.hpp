#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "nisnn/model.hpp"
#include "nisnn/train.hpp"

namespace nisnn {

inline constexpr int kConfigSchemaVersion = 1;

/// Everything one command needs: network, training, dataset and output
/// locations. Defaults are the reference hyperparameters.
struct RunConfig {
  NetworkSpec network;
  TrainConfig train;
  std::filesystem::path data_path;
  std::filesystem::path out_dir = "runs";
  std::size_t eval_batch = 64;

  /// Throws ConfigError with the offending field path.
  void validate() const;
};

/// Parses a TOML-style key/value file:
///
///   schema_version = 1
///   [network]
///   family = "snn"
///   ...
///
/// Unknown sections or keys, missing schema_version and malformed values are
/// ConfigErrors naming the field path (e.g. "train.lr"). Relative paths are
/// resolved against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});

/// Applies "section.key=value" overrides on top of a config.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides,
                     const std::filesystem::path& base_dir = {});

/// Renders a config in the same format load_run_config reads.
std::string render_run_config(const RunConfig& cfg);

}  // namespace nisnn
