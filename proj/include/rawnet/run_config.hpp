#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rawnet/data.hpp"
#include "rawnet/protocol.hpp"
#include "rawnet/train.hpp"

namespace rawnet {

inline constexpr int kRunConfigVersion = 1;

struct SanityDataConfig {
  std::size_t n_per_class = 64;
  std::uint64_t seed = 7;
  bool permute_labels = false;  // label-shuffled control run
  std::optional<std::filesystem::path> data_dir;  // default: <output_dir>/sanity_data
};

/// The declarative run document. Every field has a default except version.
struct RunConfig {
  int version = kRunConfigVersion;
  Protocol protocol = Protocol::custom;
  double scale = 1.0;
  std::vector<std::filesystem::path> manifests;
  std::filesystem::path output_dir = "runs/default";
  std::optional<std::filesystem::path> cache_dir;
  TrainConfig train;
  data::MixSpec mix;
  SanityDataConfig sanity;
};

/// Strict conversion: unknown keys, wrong types and a missing or unsupported
/// version raise ConfigError naming the dotted field. Relative paths are
/// resolved against base_dir.
RunConfig run_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

/// Effective configuration with every default filled in.
nlohmann::json run_config_to_json(const RunConfig& cfg);

/// Applies `dotted.path=value`; value is parsed as JSON and falls back to a
/// plain string. Intermediate objects are created as needed.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Reads the file, applies overrides, converts; RAWNET_CACHE_DIR (if set)
/// replaces cache_dir.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace rawnet
