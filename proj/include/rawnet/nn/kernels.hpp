#pragma once

#include <cstddef>

namespace rawnet::nn {

struct ConvDims {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t length = 0;
};

struct ChannelDims {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t length = 0;
};

struct GruDims {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::size_t input = 0;
  std::size_t hidden = 0;
};

// Layouts: conv/BN/pool activations are [batch][channel][time]; GRU inputs
// are [batch][step][feature]; GRU hidden sequences are [batch][step + 1][H]
// with step 0 the zero initial state; GRU gate caches are [batch][step][4H]
// holding r, z, n and (W_hn h + b_hn).
//
// Backward kernels accumulate (+=) into weight gradients and overwrite input
// gradients. A null input-gradient pointer skips that computation.

#define RAWNET_DECLARE_KERNELS(T)                                                               \
  void conv1d_forward(const ConvDims& d, const T* x, const T* w, const T* b, T* y);             \
  void conv1d_backward(const ConvDims& d, const T* x, const T* w, const T* dy, T* dx, T* dw,     \
                       T* db);                                                                  \
  void batchnorm_train_forward(const ChannelDims& d, const T* x, const T* gamma, const T* beta,  \
                               double eps, T* y, T* xhat, T* inv_std, double* mean,             \
                               double* var);                                                    \
  void batchnorm_eval_forward(const ChannelDims& d, const T* x, const T* gamma, const T* beta,   \
                              const double* mean, const double* var, double eps, T* y);         \
  void batchnorm_backward(const ChannelDims& d, const T* dy, const T* xhat, const T* gamma,      \
                          const T* inv_std, T* dx, T* dgamma, T* dbeta);                        \
  void relu_forward(std::size_t n, const T* x, T* y);                                           \
  void relu_backward(std::size_t n, const T* y, const T* dy, T* dx);                            \
  void adaptive_avg_pool_forward(std::size_t rows, std::size_t length, std::size_t out_len,      \
                                 const T* x, T* y);                                             \
  void adaptive_avg_pool_backward(std::size_t rows, std::size_t length, std::size_t out_len,     \
                                  const T* dy, T* dx);                                          \
  void gru_forward(const GruDims& d, const T* x, const T* w_ih, const T* w_hh, const T* b_ih,    \
                   const T* b_hh, T* h_seq, T* gates);                                          \
  void gru_backward(const GruDims& d, const T* x, const T* w_ih, const T* w_hh, const T* h_seq,   \
                    const T* gates, const T* dh_final, T* dx, T* dw_ih, T* dw_hh, T* db_ih,     \
                    T* db_hh);                                                                  \
  void linear_forward(std::size_t batch, std::size_t in, std::size_t out, const T* x,           \
                      const T* w, const T* b, T* y);                                            \
  void linear_backward(std::size_t batch, std::size_t in, std::size_t out, const T* x,          \
                       const T* w, const T* dy, T* dx, T* dw, T* db);

/// OpenMP-parallel kernels used by the model. Every reduction has a fixed
/// summation order independent of the thread count.
namespace kernels {
RAWNET_DECLARE_KERNELS(float)
RAWNET_DECLARE_KERNELS(double)
}  // namespace kernels

/// Serial textbook loops, kept as the oracle for the parallel kernels.
namespace reference {
RAWNET_DECLARE_KERNELS(float)
RAWNET_DECLARE_KERNELS(double)
}  // namespace reference

#undef RAWNET_DECLARE_KERNELS

/// Adaptive pooling bin j covers [floor(j*T/P), ceil((j+1)*T/P)).
inline std::size_t pool_bin_begin(std::size_t j, std::size_t length, std::size_t out_len) {
  return j * length / out_len;
}
inline std::size_t pool_bin_end(std::size_t j, std::size_t length, std::size_t out_len) {
  return ((j + 1) * length + out_len - 1) / out_len;
}

}  // namespace rawnet::nn
