#include "rawnet/nn/layers.hpp"

#include <cmath>
#include <sstream>

#include "rawnet/errors.hpp"
#include "rawnet/nn/fault.hpp"
#include "rawnet/nn/kernels.hpp"
#include "rawnet/rng.hpp"

namespace rawnet::nn {

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

template <typename T>
void fill_uniform(ParamTensor<T>& p, std::uint64_t seed, double bound) {
  StreamRng rng{seed, name_hash(p.name)};
  for (T& v : p.values) v = static_cast<T>(rng.uniform(-bound, bound));
}

[[noreturn]] void shape_error(const std::string& where, const std::string& expected,
                              const std::vector<std::size_t>& got) {
  throw ShapeError(where + ": expected " + expected + ", got " + shape_string(got));
}

void expect_rank3(const std::string& where, const std::vector<std::size_t>& s, std::size_t dim1) {
  if (s.size() != 3 || s[1] != dim1)
    shape_error(where, "[batch, " + std::to_string(dim1) + ", time]", s);
}

}  // namespace

template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  kernels::relu_forward(x.size(), x.ptr(), x.ptr());
}

template <typename T>
void relu_grad_inplace(const Tensor<T>& y, Tensor<T>& dy) {
  kernels::relu_backward(y.size(), y.ptr(), dy.ptr(), dy.ptr());
}

// ---- Conv1d ---------------------------------------------------------------

template <typename T>
Conv1d<T>::Conv1d(const std::string& name, std::size_t in_channels, std::size_t out_channels)
    : weight(name + ".weight", {out_channels, in_channels, 3}),
      bias(name + ".bias", {out_channels}),
      in_(in_channels),
      out_(out_channels) {}

template <typename T>
void Conv1d<T>::init(std::uint64_t seed) {
  fill_uniform(weight, seed, std::sqrt(6.0 / static_cast<double>(in_ * 3)));
  std::fill(bias.values.begin(), bias.values.end(), T{0});
}

template <typename T>
void Conv1d<T>::forward(const Tensor<T>& x, Tensor<T>& y) const {
  expect_rank3(weight.name, x.shape, in_);
  const ConvDims d{x.dim(0), in_, out_, x.dim(2)};
  if (y.shape != std::vector<std::size_t>{d.batch, out_, d.length}) y = Tensor<T>({d.batch, out_, d.length});
  kernels::conv1d_forward(d, x.ptr(), weight.values.data(), bias.values.data(), y.ptr());
}

template <typename T>
void Conv1d<T>::backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx) {
  expect_rank3(weight.name, x.shape, in_);
  expect_rank3(weight.name + " (grad)", dy.shape, out_);
  const ConvDims d{x.dim(0), in_, out_, x.dim(2)};
  if (dx && dx->shape != x.shape) *dx = Tensor<T>(x.shape);
  kernels::conv1d_backward(d, x.ptr(), weight.values.data(), dy.ptr(), dx ? dx->ptr() : nullptr,
                           weight.grad.data(), bias.grad.data());
}

// ---- BatchNorm1d ----------------------------------------------------------

template <typename T>
BatchNorm1d<T>::BatchNorm1d(const std::string& n, std::size_t channels)
    : name(n), gamma(n + ".gamma", {channels}), beta(n + ".beta", {channels}) {
  std::fill(gamma.values.begin(), gamma.values.end(), T{1});
  state.running_mean.assign(channels, 0.0);
  state.running_var.assign(channels, 1.0);
}

template <typename T>
void BatchNorm1d<T>::forward(const Tensor<T>& x, Tensor<T>& y, Mode mode, BatchNormCache<T>* cache) {
  const std::size_t C = gamma.size();
  expect_rank3(name, x.shape, C);
  const ChannelDims d{x.dim(0), C, x.dim(2)};
  if (&y != &x && y.shape != x.shape) y = Tensor<T>(x.shape);

  if (mode == Mode::eval) {
    if (!state.initialized)
      throw UninitializedStatsError(name + ": eval mode requested before any training step or checkpoint load");
    kernels::batchnorm_eval_forward(d, x.ptr(), gamma.values.data(), beta.values.data(),
                                    state.running_mean.data(), state.running_var.data(), state.eps, y.ptr());
    return;
  }

  const std::size_t count = d.batch * d.length;
  if (count < 2) throw ArgumentError(name + ": train mode needs at least 2 values per channel");
  BatchNormCache<T> local;
  BatchNormCache<T>& c = cache ? *cache : local;
  if (c.xhat.shape != x.shape) c.xhat = Tensor<T>(x.shape);
  c.inv_std.resize(C);
  std::vector<double> mean(C), var(C);
  kernels::batchnorm_train_forward(d, x.ptr(), gamma.values.data(), beta.values.data(), state.eps,
                                   y.ptr(), c.xhat.ptr(), c.inv_std.data(), mean.data(), var.data());
  const double m = state.momentum;
  const double unbias = static_cast<double>(count) / static_cast<double>(count - 1);
  for (std::size_t ch = 0; ch < C; ++ch) {
    state.running_mean[ch] = (1.0 - m) * state.running_mean[ch] + m * mean[ch];
    state.running_var[ch] = (1.0 - m) * state.running_var[ch] + m * var[ch] * unbias;
  }
  state.initialized = true;
}

template <typename T>
void BatchNorm1d<T>::backward(const Tensor<T>& dy, const BatchNormCache<T>& cache, Tensor<T>* dx) {
  const std::size_t C = gamma.size();
  expect_rank3(name + " (grad)", dy.shape, C);
  const ChannelDims d{dy.dim(0), C, dy.dim(2)};
  if (dx && dx != &dy && dx->shape != dy.shape) *dx = Tensor<T>(dy.shape);
  kernels::batchnorm_backward(d, dy.ptr(), cache.xhat.ptr(), gamma.values.data(), cache.inv_std.data(),
                              dx ? dx->ptr() : nullptr, gamma.grad.data(), beta.grad.data());
}

// ---- Linear ---------------------------------------------------------------

template <typename T>
Linear<T>::Linear(const std::string& name, std::size_t in, std::size_t out)
    : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}), in_(in), out_(out) {}

template <typename T>
void Linear<T>::init(std::uint64_t seed) {
  fill_uniform(weight, seed, std::sqrt(6.0 / static_cast<double>(in_)));
  std::fill(bias.values.begin(), bias.values.end(), T{0});
}

template <typename T>
void Linear<T>::forward(const Tensor<T>& x, Tensor<T>& y) const {
  if (x.shape.size() != 2 || x.dim(1) != in_)
    shape_error(weight.name, "[batch, " + std::to_string(in_) + "]", x.shape);
  const std::size_t B = x.dim(0);
  if (y.shape != std::vector<std::size_t>{B, out_}) y = Tensor<T>({B, out_});
  kernels::linear_forward(B, in_, out_, x.ptr(), weight.values.data(), bias.values.data(), y.ptr());
}

template <typename T>
void Linear<T>::backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx) {
  if (dy.shape != std::vector<std::size_t>{x.dim(0), out_})
    shape_error(weight.name + " (grad)", "[batch, " + std::to_string(out_) + "]", dy.shape);
  const std::size_t B = x.dim(0);
  if (dx && dx->shape != x.shape) *dx = Tensor<T>(x.shape);
  kernels::linear_backward(B, in_, out_, x.ptr(), weight.values.data(), dy.ptr(), dx ? dx->ptr() : nullptr,
                           weight.grad.data(), bias.grad.data());
}

// ---- BiGru ----------------------------------------------------------------

namespace {

template <typename T>
GruDirection<T> make_direction(const std::string& prefix, std::size_t I, std::size_t H) {
  return {ParamTensor<T>(prefix + ".w_ih", {3 * H, I}), ParamTensor<T>(prefix + ".w_hh", {3 * H, H}),
          ParamTensor<T>(prefix + ".b_ih", {3 * H}), ParamTensor<T>(prefix + ".b_hh", {3 * H})};
}

template <typename T>
void reverse_time(const Tensor<T>& x, Tensor<T>& out) {
  const std::size_t B = x.dim(0), S = x.dim(1), F = x.dim(2);
  if (out.shape != x.shape) out = Tensor<T>(x.shape);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < S; ++t)
      std::copy_n(x.ptr() + (b * S + t) * F, F, out.ptr() + (b * S + (S - 1 - t)) * F);
}

}  // namespace

template <typename T>
BiGru<T>::BiGru(const std::string& name, std::size_t input, std::size_t hidden)
    : fwd(make_direction<T>(name + ".fwd", input, hidden)),
      bwd(make_direction<T>(name + ".bwd", input, hidden)),
      input_(input),
      hidden_(hidden) {}

template <typename T>
void BiGru<T>::init(std::uint64_t seed) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
  for (GruDirection<T>* dir : {&fwd, &bwd}) {
    fill_uniform(dir->w_ih, seed, bound);
    fill_uniform(dir->w_hh, seed, bound);
    std::fill(dir->b_ih.values.begin(), dir->b_ih.values.end(), T{0});
    std::fill(dir->b_hh.values.begin(), dir->b_hh.values.end(), T{0});
  }
}

template <typename T>
void BiGru<T>::forward(const Tensor<T>& x, Tensor<T>& out, BiGruCache<T>& cache) const {
  if (x.shape.size() != 3 || x.dim(2) != input_)
    shape_error(fwd.w_ih.name, "[batch, steps, " + std::to_string(input_) + "]", x.shape);
  const std::size_t B = x.dim(0), S = x.dim(1), H = hidden_;
  const GruDims d{B, S, input_, H};
  cache.x_fwd = x;
  reverse_time(x, cache.x_bwd);
  cache.h_fwd = Tensor<T>({B, S + 1, H});
  cache.h_bwd = Tensor<T>({B, S + 1, H});
  cache.g_fwd = Tensor<T>({B, S, 4 * H});
  cache.g_bwd = Tensor<T>({B, S, 4 * H});
  kernels::gru_forward(d, cache.x_fwd.ptr(), fwd.w_ih.values.data(), fwd.w_hh.values.data(),
                       fwd.b_ih.values.data(), fwd.b_hh.values.data(), cache.h_fwd.ptr(), cache.g_fwd.ptr());
  kernels::gru_forward(d, cache.x_bwd.ptr(), bwd.w_ih.values.data(), bwd.w_hh.values.data(),
                       bwd.b_ih.values.data(), bwd.b_hh.values.data(), cache.h_bwd.ptr(), cache.g_bwd.ptr());
  out = Tensor<T>({B, 2 * H});
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(cache.h_fwd.ptr() + (b * (S + 1) + S) * H, H, out.ptr() + b * 2 * H);
    std::copy_n(cache.h_bwd.ptr() + (b * (S + 1) + S) * H, H, out.ptr() + b * 2 * H + H);
  }
}

template <typename T>
void BiGru<T>::backward(const BiGruCache<T>& cache, const Tensor<T>& dout, Tensor<T>* dx) {
  const std::size_t B = cache.x_fwd.dim(0), S = cache.x_fwd.dim(1), H = hidden_, I = input_;
  if (dout.shape != std::vector<std::size_t>{B, 2 * H})
    shape_error(fwd.w_ih.name + " (grad)", "[batch, " + std::to_string(2 * H) + "]", dout.shape);
  const GruDims d{B, S, I, H};
  Tensor<T> dh_f({B, H}), dh_b({B, H});
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(dout.ptr() + b * 2 * H, H, dh_f.ptr() + b * H);
    std::copy_n(dout.ptr() + b * 2 * H + H, H, dh_b.ptr() + b * H);
  }
  Tensor<T> dx_f, dx_b;
  if (dx) {
    dx_f = Tensor<T>({B, S, I});
    dx_b = Tensor<T>({B, S, I});
  }
  kernels::gru_backward(d, cache.x_fwd.ptr(), fwd.w_ih.values.data(), fwd.w_hh.values.data(),
                        cache.h_fwd.ptr(), cache.g_fwd.ptr(), dh_f.ptr(), dx ? dx_f.ptr() : nullptr,
                        fwd.w_ih.grad.data(), fwd.w_hh.grad.data(), fwd.b_ih.grad.data(), fwd.b_hh.grad.data());
  kernels::gru_backward(d, cache.x_bwd.ptr(), bwd.w_ih.values.data(), bwd.w_hh.values.data(),
                        cache.h_bwd.ptr(), cache.g_bwd.ptr(), dh_b.ptr(), dx ? dx_b.ptr() : nullptr,
                        bwd.w_ih.grad.data(), bwd.w_hh.grad.data(), bwd.b_ih.grad.data(), bwd.b_hh.grad.data());
  if (!dx) return;
  reverse_time(dx_b, *dx);
  for (std::size_t k = 0; k < dx->size(); ++k) (*dx)[k] += dx_f[k];
}

// ---- ResidualBlock --------------------------------------------------------

template <typename T>
ResidualBlock<T>::ResidualBlock(const std::string& name, std::size_t channels)
    : conv1(name + ".conv1", channels, channels),
      bn1(name + ".bn1", channels),
      conv2(name + ".conv2", channels, channels),
      bn2(name + ".bn2", channels) {}

template <typename T>
void ResidualBlock<T>::init(std::uint64_t seed) {
  conv1.init(seed);
  conv2.init(seed);
}

template <typename T>
void ResidualBlock<T>::forward(const Tensor<T>& x, Tensor<T>& out, Mode mode, ResidualCache<T>* cache) {
  ResidualCache<T> local;
  ResidualCache<T>& c = cache ? *cache : local;
  conv1.forward(x, c.mid);
  bn1.forward(c.mid, c.mid, mode, mode == Mode::train ? &c.bn1 : nullptr);
  relu_inplace(c.mid);
  conv2.forward(c.mid, out);
  bn2.forward(out, out, mode, mode == Mode::train ? &c.bn2 : nullptr);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += x[k];
  relu_inplace(out);
}

template <typename T>
void ResidualBlock<T>::backward(const Tensor<T>& x, const Tensor<T>& out, const ResidualCache<T>& cache,
                                const Tensor<T>& dout, Tensor<T>& dx) {
  Tensor<T> ds = dout;
  relu_grad_inplace(out, ds);
  Tensor<T> g;
  bn2.backward(ds, cache.bn2, &g);
  Tensor<T> dmid;
  conv2.backward(cache.mid, g, &dmid);
  relu_grad_inplace(cache.mid, dmid);
  bn1.backward(dmid, cache.bn1, &dmid);
  conv1.backward(x, dmid, &dx);
  if (!fault_is(BackwardFault::residual_skip))
    for (std::size_t k = 0; k < dx.size(); ++k) dx[k] += ds[k];
}

// ---- pooling --------------------------------------------------------------

template <typename T>
void adaptive_avg_pool(const Tensor<T>& x, std::size_t out_len, Tensor<T>& y) {
  if (out_len == 0) throw ArgumentError("adaptive_avg_pool: out_len must be positive");
  if (x.shape.size() != 3) shape_error("adaptive_avg_pool", "[batch, channels, time]", x.shape);
  const std::size_t L = x.dim(2);
  if (out_len > L) throw ArgumentError("adaptive_avg_pool: out_len exceeds input length");
  y = Tensor<T>({x.dim(0), x.dim(1), out_len});
  kernels::adaptive_avg_pool_forward(x.dim(0) * x.dim(1), L, out_len, x.ptr(), y.ptr());
}

template <typename T>
void adaptive_avg_pool_grad(const Tensor<T>& dy, std::size_t in_len, Tensor<T>& dx) {
  dx = Tensor<T>({dy.dim(0), dy.dim(1), in_len});
  kernels::adaptive_avg_pool_backward(dy.dim(0) * dy.dim(1), in_len, dy.dim(2), dy.ptr(), dx.ptr());
}

#define RAWNET_INSTANTIATE(T)                                                              \
  template class Conv1d<T>;                                                                \
  template class BatchNorm1d<T>;                                                           \
  template class Linear<T>;                                                                \
  template class BiGru<T>;                                                                 \
  template class ResidualBlock<T>;                                                         \
  template void adaptive_avg_pool<T>(const Tensor<T>&, std::size_t, Tensor<T>&);           \
  template void adaptive_avg_pool_grad<T>(const Tensor<T>&, std::size_t, Tensor<T>&);      \
  template T sigmoid<T>(T);                                                                \
  template void relu_inplace<T>(Tensor<T>&);                                               \
  template void relu_grad_inplace<T>(const Tensor<T>&, Tensor<T>&);

RAWNET_INSTANTIATE(float)
RAWNET_INSTANTIATE(double)

#undef RAWNET_INSTANTIATE

}  // namespace rawnet::nn
