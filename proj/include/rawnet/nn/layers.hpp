#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rawnet/nn/tensor.hpp"

namespace rawnet::nn {

/// Kernel 3, stride 1, padding 1; preserves the temporal length.
template <typename T>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(const std::string& name, std::size_t in_channels, std::size_t out_channels);

  /// Weights U(+-sqrt(6 / fan_in)), bias 0.
  void init(std::uint64_t seed);
  void forward(const Tensor<T>& x, Tensor<T>& y) const;
  /// Accumulates weight/bias grads; writes dx when non-null.
  void backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx);

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }

  ParamTensor<T> weight;
  ParamTensor<T> bias;

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
};

template <typename T>
struct BatchNormCache {
  Tensor<T> xhat;
  std::vector<T> inv_std;
};

/// Per-channel normalization over (batch, time).
template <typename T>
class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  BatchNorm1d(const std::string& name, std::size_t channels);

  /// In train mode fills `cache` and updates the running statistics. y may
  /// alias x.
  void forward(const Tensor<T>& x, Tensor<T>& y, Mode mode, BatchNormCache<T>* cache);
  void backward(const Tensor<T>& dy, const BatchNormCache<T>& cache, Tensor<T>* dx);

  std::string name;
  ParamTensor<T> gamma;
  ParamTensor<T> beta;
  BatchNormState state;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out);

  void init(std::uint64_t seed);
  void forward(const Tensor<T>& x, Tensor<T>& y) const;
  void backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx);

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

  ParamTensor<T> weight;
  ParamTensor<T> bias;

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
};

/// One GRU direction. Gate rows are ordered r, z, n.
template <typename T>
struct GruDirection {
  ParamTensor<T> w_ih;  // [3H, I]
  ParamTensor<T> w_hh;  // [3H, H]
  ParamTensor<T> b_ih;  // [3H]
  ParamTensor<T> b_hh;  // [3H]
};

template <typename T>
struct BiGruCache {
  Tensor<T> x_fwd;   // [B, S, I]
  Tensor<T> x_bwd;   // time-reversed copy
  Tensor<T> h_fwd;   // [B, S + 1, H]
  Tensor<T> h_bwd;
  Tensor<T> g_fwd;   // [B, S, 4H]
  Tensor<T> g_bwd;
};

/// Bidirectional GRU returning the concatenated final hidden states [B, 2H].
template <typename T>
class BiGru {
 public:
  BiGru() = default;
  BiGru(const std::string& name, std::size_t input, std::size_t hidden);

  /// Matrices U(+-1/sqrt(H)), biases 0.
  void init(std::uint64_t seed);
  void forward(const Tensor<T>& x, Tensor<T>& out, BiGruCache<T>& cache) const;
  void backward(const BiGruCache<T>& cache, const Tensor<T>& dout, Tensor<T>* dx);

  std::size_t input_size() const { return input_; }
  std::size_t hidden_size() const { return hidden_; }

  GruDirection<T> fwd;
  GruDirection<T> bwd;

 private:
  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
};

/// y = relu(BN2(conv2(relu(BN1(conv1(x))))) + x)
template <typename T>
struct ResidualCache {
  BatchNormCache<T> bn1;
  BatchNormCache<T> bn2;
  Tensor<T> mid;  // relu(BN1(conv1(x)))
};

template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(const std::string& name, std::size_t channels);

  void init(std::uint64_t seed);
  /// Train mode fills `cache`; out must not alias x.
  void forward(const Tensor<T>& x, Tensor<T>& out, Mode mode, ResidualCache<T>* cache);
  /// `out` is the forward output (its sign pattern is the final ReLU mask).
  void backward(const Tensor<T>& x, const Tensor<T>& out, const ResidualCache<T>& cache,
                const Tensor<T>& dout, Tensor<T>& dx);

  Conv1d<T> conv1;
  BatchNorm1d<T> bn1;
  Conv1d<T> conv2;
  BatchNorm1d<T> bn2;
};

template <typename T>
void adaptive_avg_pool(const Tensor<T>& x, std::size_t out_len, Tensor<T>& y);
template <typename T>
void adaptive_avg_pool_grad(const Tensor<T>& dy, std::size_t in_len, Tensor<T>& dx);

template <typename T>
T sigmoid(T x);

template <typename T>
void relu_inplace(Tensor<T>& x);
template <typename T>
void relu_grad_inplace(const Tensor<T>& y, Tensor<T>& dy);

}  // namespace rawnet::nn
