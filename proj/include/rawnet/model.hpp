#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rawnet/nn/layers.hpp"
#include "rawnet/nn/tensor.hpp"

namespace rawnet {

struct RawNetLiteConfig {
  std::size_t channels = 64;
  std::size_t kernel = 3;
  std::size_t n_res_blocks = 3;
  std::size_t pool_len = 128;
  std::size_t gru_hidden = 128;
  std::size_t fc_hidden = 64;
  std::size_t input_len = 48000;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
  bool operator==(const RawNetLiteConfig&) const = default;
};

/// Training metadata carried in checkpoints.
struct CheckpointMeta {
  std::int64_t epoch = 0;
  double best_val_f1 = 0.0;
};

/// Conv1D+BN+ReLU stem -> residual blocks -> adaptive average pool -> BiGRU
/// (final states of both directions concatenated) -> Linear+ReLU -> Linear ->
/// sigmoid. The output is P(fake) per clip.
template <typename T>
class RawNetLite {
 public:
  explicit RawNetLite(const RawNetLiteConfig& cfg);

  const RawNetLiteConfig& config() const { return cfg_; }

  /// batch is [B, 1, input_len]. Train mode uses batch statistics, updates
  /// the BN running estimates and keeps activations for backward().
  std::vector<T> forward(const nn::Tensor<T>& batch, nn::Mode mode);

  /// Accumulates parameter gradients given dLoss/dProbability for the batch of
  /// the last train-mode forward.
  void backward(std::span<const T> dloss_dprob);

  std::vector<nn::ParamTensor<T>*> parameters();
  std::vector<const nn::ParamTensor<T>*> parameters() const;
  std::vector<nn::BatchNorm1d<T>*> batchnorms();
  std::vector<const nn::BatchNorm1d<T>*> batchnorms() const;
  std::size_t parameter_count() const;
  void zero_grad();

  nn::Linear<T>& output_layer() { return fc2_; }

 private:
  struct Cache {
    nn::Tensor<T> input;
    nn::BatchNormCache<T> stem_bn;
    std::vector<nn::Tensor<T>> acts;  // acts[0] stem output, acts[k + 1] block k output
    std::vector<nn::ResidualCache<T>> blocks;
    nn::BiGruCache<T> gru;
    nn::Tensor<T> gru_out;
    nn::Tensor<T> hidden;  // relu(fc1)
    std::vector<T> prob;
    bool valid = false;
  };

  RawNetLiteConfig cfg_;
  nn::Conv1d<T> stem_conv_;
  nn::BatchNorm1d<T> stem_bn_;
  std::vector<nn::ResidualBlock<T>> blocks_;
  nn::BiGru<T> gru_;
  nn::Linear<T> fc1_;
  nn::Linear<T> fc2_;
  Cache cache_;
};

using Model = RawNetLite<float>;

/// Self-describing checkpoint: a text header (magic, version, JSON directory
/// with config, tensor table, BN statistics, metadata and a payload
/// checksum) followed by raw little-endian float32 data.
std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const CheckpointMeta& meta);
Model deserialize_checkpoint(std::span<const std::uint8_t> bytes, CheckpointMeta* meta = nullptr);

void save_checkpoint(const Model& model, const CheckpointMeta& meta, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

/// Copies parameters and BN statistics between precisions.
template <typename To, typename From>
void copy_weights(const RawNetLite<From>& src, RawNetLite<To>& dst);

}  // namespace rawnet
