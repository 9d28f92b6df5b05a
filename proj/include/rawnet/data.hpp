#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rawnet/audio_io.hpp"
#include "rawnet/augment.hpp"
#include "rawnet/nn/tensor.hpp"

namespace rawnet::data {

enum class Role { train, val, test };

std::string to_string(Role r);
Role role_from_string(const std::string& s);  // throws ParseError

struct ManifestEntry {
  std::string path;
  int label = 0;  // kLabelReal / kLabelFake
  std::string domain;
  std::optional<Role> split;
  std::size_t line = 0;  // 1-based source line, 0 when synthesized
};

/// CSV with header `path,label,domain[,split]`. `source` names the input in
/// error messages.
std::vector<ManifestEntry> parse_manifest(const std::string& text, const std::string& source = "manifest");

/// Relative paths are resolved against the manifest's directory.
std::vector<ManifestEntry> parse_manifest_file(const std::filesystem::path& path);

std::string format_manifest(const std::vector<ManifestEntry>& entries);
void write_manifest_file(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct Splits {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> val;
  std::vector<ManifestEntry> test;
};

/// Per-class shuffle under `seed`, then contiguous cuts at llround(n * ratio).
Splits stratified_split(const std::vector<ManifestEntry>& entries, const SplitRatios& ratios, std::uint64_t seed);

struct DomainCap {
  std::string domain;
  std::size_t n_real = 0;
  std::size_t n_fake = 0;
  Role role = Role::train;
};

struct MixSpec {
  std::vector<DomainCap> caps;
  std::uint64_t seed = 0;
};

using Composed = Splits;

/// Samples each (domain, class) without replacement: the pool is shuffled
/// under the seed and caps are served in role order train, val, test. An
/// entry carrying a split tag is only eligible for that role. The result is
/// checked with verify_disjoint.
Composed compose_mix(const MixSpec& spec, const std::vector<ManifestEntry>& pool);

/// Throws ProtocolViolation naming the first path found in two roles.
void verify_disjoint(const Composed& c);

/// Throws ProtocolViolation if any evaluated path was used for training.
void verify_no_overlap(const std::vector<ManifestEntry>& train, const std::vector<ManifestEntry>& evaluated);

// ---- clip loading ----------------------------------------------------------

/// Turns a manifest entry into a preprocessed clip. Implementations must be
/// safe to call concurrently.
class ClipSource {
 public:
  virtual ~ClipSource() = default;
  virtual audio::FixedClip load(const ManifestEntry& e) const = 0;
};

/// Decodes files from disk. With a cache directory, clips are stored as
/// <fnv1a64 of file bytes>.f32 (48000 little-endian float32) and reused.
class FileClipSource : public ClipSource {
 public:
  explicit FileClipSource(std::optional<std::filesystem::path> cache_dir = std::nullopt);
  audio::FixedClip load(const ManifestEntry& e) const override;

  /// Loads or materializes the cached clip; returns true on a cache hit.
  bool ensure_cached(const ManifestEntry& e, audio::FixedClip* out = nullptr) const;
  std::filesystem::path cache_path_for(const std::vector<std::uint8_t>& bytes) const;

 private:
  std::optional<std::filesystem::path> cache_dir_;
};

std::string content_hash(const std::vector<std::uint8_t>& bytes);

// ---- batching ---------------------------------------------------------------

struct BatchOptions {
  std::size_t batch_size = 16;
  std::uint64_t shuffle_seed = 0;
  bool shuffle = true;
  std::uint64_t epoch = 0;
  std::optional<augment::AugmentConfig> augment;
  bool strict = false;  // unreadable files throw instead of being skipped
};

struct Batch {
  nn::Tensor<float> clips;  // [B, 1, 48000]
  std::vector<int> labels;
  std::vector<std::size_t> entry_index;
  std::vector<bool> augmented;

  std::size_t size() const { return labels.size(); }
};

/// Ordered batch stream over `entries`. With augmentation every entry also
/// yields an augmented copy keyed by (epoch, entry index), doubling the
/// stream. Clips of a batch are prepared in parallel into fixed slots, so the
/// output does not depend on the thread count.
class BatchStream {
 public:
  BatchStream(const std::vector<ManifestEntry>& entries, const ClipSource& source, BatchOptions opts);

  bool next(Batch& out);
  std::size_t num_items() const { return items_.size(); }
  std::size_t num_batches() const;
  std::size_t skipped() const { return skipped_.size(); }
  const std::vector<std::string>& skipped_paths() const { return skipped_; }

 private:
  struct Item {
    std::size_t entry;
    bool augmented;
  };
  const std::vector<ManifestEntry>& entries_;
  const ClipSource& source_;
  BatchOptions opts_;
  std::vector<Item> items_;
  std::size_t cursor_ = 0;
  std::vector<std::string> skipped_;
};

/// Batch sizes make_batches would produce with no skipped files.
std::vector<std::size_t> batch_sizes(std::size_t n_entries, std::size_t batch_size, bool augment);

// ---- synthetic data ---------------------------------------------------------

struct SanitySpec {
  std::size_t n_per_class = 64;
  double min_hz = 100.0;
  double max_hz = 1000.0;
  std::uint64_t seed = 0;
  std::string domain = "synthetic";
};

/// Writes sine-wave "real" and white-noise "fake" WAVs (16 kHz, 3 s) to
/// `dir` and returns their manifest entries (absolute paths, no split tag).
std::vector<ManifestEntry> write_sanity_dataset(const std::filesystem::path& dir, const SanitySpec& spec);

}  // namespace rawnet::data
