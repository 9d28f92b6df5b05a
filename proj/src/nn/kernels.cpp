#include "rawnet/nn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rawnet/nn/fault.hpp"

namespace rawnet::nn::kernels {

namespace {

using idx = std::int64_t;

constexpr std::size_t kTile = 2048;

template <typename T>
inline T stable_sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T s{0};
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// y[t] += w0 x[t-1] + w1 x[t] + w2 x[t+1] for t in [t0, t1), zero padded.
template <typename T>
inline void conv3_accumulate(T* y, const T* x, T w0, T w1, T w2, std::size_t len, std::size_t t0,
                             std::size_t t1) {
  std::size_t lo = std::max<std::size_t>(t0, 1);
  std::size_t hi = std::min(t1, len - 1);
  if (t0 == 0) {
    T v = w1 * x[0];
    if (len > 1) v += w2 * x[1];
    y[0] += v;
  }
#pragma omp simd
  for (std::size_t t = lo; t < hi; ++t) y[t] += w0 * x[t - 1] + w1 * x[t] + w2 * x[t + 1];
  if (t1 == len && len > 1) y[len - 1] += w0 * x[len - 2] + w1 * x[len - 1];
}

template <typename T>
void conv1d_forward_impl(const ConvDims& d, const T* x, const T* w, const T* b, T* y) {
  const std::size_t L = d.length;
  const std::size_t tiles = (L + kTile - 1) / kTile;
  const idx work = static_cast<idx>(d.batch * tiles);
#pragma omp parallel for schedule(static)
  for (idx job = 0; job < work; ++job) {
    const std::size_t n = static_cast<std::size_t>(job) / tiles;
    const std::size_t t0 = (static_cast<std::size_t>(job) % tiles) * kTile;
    const std::size_t t1 = std::min(L, t0 + kTile);
    for (std::size_t o = 0; o < d.out_channels; ++o) {
      T* yr = y + (n * d.out_channels + o) * L;
      std::fill(yr + t0, yr + t1, b[o]);
      for (std::size_t i = 0; i < d.in_channels; ++i) {
        const T* wk = w + (o * d.in_channels + i) * 3;
        conv3_accumulate(yr, x + (n * d.in_channels + i) * L, wk[0], wk[1], wk[2], L, t0, t1);
      }
    }
  }
}

template <typename T>
void conv1d_backward_impl(const ConvDims& d, const T* x, const T* w, const T* dy, T* dx, T* dw,
                          T* db) {
  const std::size_t L = d.length;
  const bool bad_padding = fault_is(BackwardFault::conv_padding);

  // weight and bias gradients: one output channel per iteration, so each
  // accumulator is owned by exactly one thread
#pragma omp parallel for schedule(static)
  for (idx oi = 0; oi < static_cast<idx>(d.out_channels); ++oi) {
    const auto o = static_cast<std::size_t>(oi);
    double bias_acc = 0.0;
    std::vector<double> acc(d.in_channels * 3, 0.0);
    for (std::size_t n = 0; n < d.batch; ++n) {
      const T* g = dy + (n * d.out_channels + o) * L;
      T s{0};
#pragma omp simd reduction(+ : s)
      for (std::size_t t = 0; t < L; ++t) s += g[t];
      bias_acc += s;
      for (std::size_t i = 0; i < d.in_channels; ++i) {
        const T* xr = x + (n * d.in_channels + i) * L;
        double* a = &acc[i * 3];
        if (L == 0) continue;
        if (bad_padding) {
          a[0] += dot(g, xr, L);
          a[1] += dot(g, xr + 1, L - 1);
          a[2] += L > 2 ? dot(g, xr + 2, L - 2) : T{0};
        } else {
          a[0] += dot(g + 1, xr, L - 1);  // tap 0 reads x[t-1]
          a[1] += dot(g, xr, L);
          a[2] += dot(g, xr + 1, L - 1);  // tap 2 reads x[t+1]
        }
      }
    }
    db[o] += static_cast<T>(bias_acc);
    for (std::size_t k = 0; k < d.in_channels * 3; ++k) dw[o * d.in_channels * 3 + k] += static_cast<T>(acc[k]);
  }

  if (!dx) return;
  const std::size_t tiles = (L + kTile - 1) / kTile;
  const idx work = static_cast<idx>(d.batch * tiles);
#pragma omp parallel for schedule(static)
  for (idx job = 0; job < work; ++job) {
    const std::size_t n = static_cast<std::size_t>(job) / tiles;
    const std::size_t t0 = (static_cast<std::size_t>(job) % tiles) * kTile;
    const std::size_t t1 = std::min(L, t0 + kTile);
    for (std::size_t i = 0; i < d.in_channels; ++i) {
      T* r = dx + (n * d.in_channels + i) * L;
      std::fill(r + t0, r + t1, T{0});
      for (std::size_t o = 0; o < d.out_channels; ++o) {
        const T* wk = w + (o * d.in_channels + i) * 3;
        // dx[s] = w0 dy[s+1] + w1 dy[s] + w2 dy[s-1]: the flipped kernel
        conv3_accumulate(r, dy + (n * d.out_channels + o) * L, wk[2], wk[1], wk[0], L, t0, t1);
      }
    }
  }
}

template <typename T>
void batchnorm_train_forward_impl(const ChannelDims& d, const T* x, const T* gamma, const T* beta,
                                  double eps, T* y, T* xhat, T* inv_std, double* mean,
                                  double* var) {
  const std::size_t L = d.length;
  const double count = static_cast<double>(d.batch * L);
#pragma omp parallel for schedule(static)
  for (idx ci = 0; ci < static_cast<idx>(d.channels); ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    double s = 0.0;
    for (std::size_t n = 0; n < d.batch; ++n) {
      const T* r = x + (n * d.channels + c) * L;
      double rs = 0.0;
#pragma omp simd reduction(+ : rs)
      for (std::size_t t = 0; t < L; ++t) rs += r[t];
      s += rs;
    }
    const double m = s / count;
    double v = 0.0;
    for (std::size_t n = 0; n < d.batch; ++n) {
      const T* r = x + (n * d.channels + c) * L;
      double rv = 0.0;
#pragma omp simd reduction(+ : rv)
      for (std::size_t t = 0; t < L; ++t) {
        const double dlt = r[t] - m;
        rv += dlt * dlt;
      }
      v += rv;
    }
    v /= count;
    const double istd = 1.0 / std::sqrt(v + eps);
    mean[c] = m;
    var[c] = v;
    inv_std[c] = static_cast<T>(istd);
    const T g = gamma[c];
    const T bt = beta[c];
    const T mt = static_cast<T>(m);
    const T it = static_cast<T>(istd);
    for (std::size_t n = 0; n < d.batch; ++n) {
      const std::size_t off = (n * d.channels + c) * L;
#pragma omp simd
      for (std::size_t t = 0; t < L; ++t) {
        const T h = (x[off + t] - mt) * it;
        xhat[off + t] = h;
        y[off + t] = g * h + bt;
      }
    }
  }
}

template <typename T>
void batchnorm_eval_forward_impl(const ChannelDims& d, const T* x, const T* gamma, const T* beta,
                                 const double* mean, const double* var, double eps, T* y) {
  const std::size_t L = d.length;
#pragma omp parallel for schedule(static)
  for (idx ci = 0; ci < static_cast<idx>(d.channels); ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    const T scale = static_cast<T>(gamma[c] / std::sqrt(var[c] + eps));
    const T shift = static_cast<T>(beta[c] - mean[c] * (gamma[c] / std::sqrt(var[c] + eps)));
    for (std::size_t n = 0; n < d.batch; ++n) {
      const std::size_t off = (n * d.channels + c) * L;
#pragma omp simd
      for (std::size_t t = 0; t < L; ++t) y[off + t] = x[off + t] * scale + shift;
    }
  }
}

template <typename T>
void batchnorm_backward_impl(const ChannelDims& d, const T* dy, const T* xhat, const T* gamma,
                             const T* inv_std, T* dx, T* dgamma, T* dbeta) {
  const std::size_t L = d.length;
  const double count = static_cast<double>(d.batch * L);
  const bool drop_mean = fault_is(BackwardFault::batchnorm_mean);
#pragma omp parallel for schedule(static)
  for (idx ci = 0; ci < static_cast<idx>(d.channels); ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < d.batch; ++n) {
      const std::size_t off = (n * d.channels + c) * L;
      double a = 0.0;
      double b = 0.0;
#pragma omp simd reduction(+ : a, b)
      for (std::size_t t = 0; t < L; ++t) {
        a += dy[off + t];
        b += static_cast<double>(dy[off + t]) * xhat[off + t];
      }
      sum_dy += a;
      sum_dy_xhat += b;
    }
    dgamma[c] += static_cast<T>(sum_dy_xhat);
    dbeta[c] += static_cast<T>(sum_dy);
    if (!dx) continue;
    // dxhat = gamma * dy; dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
    const double g = gamma[c];
    const T mean_term = drop_mean ? T{0} : static_cast<T>(g * sum_dy / count);
    const T proj_term = static_cast<T>(g * sum_dy_xhat / count);
    const T gt = gamma[c];
    const T is = inv_std[c];
    for (std::size_t n = 0; n < d.batch; ++n) {
      const std::size_t off = (n * d.channels + c) * L;
#pragma omp simd
      for (std::size_t t = 0; t < L; ++t)
        dx[off + t] = is * (gt * dy[off + t] - mean_term - xhat[off + t] * proj_term);
    }
  }
}

template <typename T>
void relu_forward_impl(std::size_t n, const T* x, T* y) {
#pragma omp parallel for simd schedule(static)
  for (idx i = 0; i < static_cast<idx>(n); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
}

template <typename T>
void relu_backward_impl(std::size_t n, const T* y, const T* dy, T* dx) {
  if (fault_is(BackwardFault::relu_mask)) {
    std::copy(dy, dy + n, dx);
    return;
  }
#pragma omp parallel for simd schedule(static)
  for (idx i = 0; i < static_cast<idx>(n); ++i) dx[i] = y[i] > T{0} ? dy[i] : T{0};
}

template <typename T>
void pool_forward_impl(std::size_t rows, std::size_t L, std::size_t P, const T* x, T* y) {
#pragma omp parallel for schedule(static)
  for (idx ri = 0; ri < static_cast<idx>(rows); ++ri) {
    const auto r = static_cast<std::size_t>(ri);
    const T* xr = x + r * L;
    for (std::size_t j = 0; j < P; ++j) {
      const std::size_t a = pool_bin_begin(j, L, P);
      const std::size_t b = pool_bin_end(j, L, P);
      double s = 0.0;
      for (std::size_t t = a; t < b; ++t) s += xr[t];
      y[r * P + j] = static_cast<T>(s / static_cast<double>(b - a));
    }
  }
}

template <typename T>
void pool_backward_impl(std::size_t rows, std::size_t L, std::size_t P, const T* dy, T* dx) {
  const std::size_t extra = fault_is(BackwardFault::pool_width) ? 1 : 0;
#pragma omp parallel for schedule(static)
  for (idx ri = 0; ri < static_cast<idx>(rows); ++ri) {
    const auto r = static_cast<std::size_t>(ri);
    T* xr = dx + r * L;
    std::fill(xr, xr + L, T{0});
    for (std::size_t j = 0; j < P; ++j) {
      const std::size_t a = pool_bin_begin(j, L, P);
      const std::size_t b = pool_bin_end(j, L, P);
      const T g = static_cast<T>(dy[r * P + j] / static_cast<double>(b - a + extra));
      for (std::size_t t = a; t < b; ++t) xr[t] += g;
    }
  }
}

template <typename T>
void gru_forward_impl(const GruDims& d, const T* x, const T* w_ih, const T* w_hh, const T* b_ih,
                      const T* b_hh, T* h_seq, T* gates) {
  const std::size_t H = d.hidden;
  const std::size_t I = d.input;
#pragma omp parallel for schedule(static)
  for (idx bi = 0; bi < static_cast<idx>(d.batch); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    std::vector<T> gi(3 * H);
    std::vector<T> gh(3 * H);
    T* hs = h_seq + b * (d.steps + 1) * H;
    std::fill(hs, hs + H, T{0});
    for (std::size_t t = 0; t < d.steps; ++t) {
      const T* xt = x + (b * d.steps + t) * I;
      const T* hp = hs + t * H;
      T* hn = hs + (t + 1) * H;
      T* gt = gates + (b * d.steps + t) * 4 * H;
      for (std::size_t g = 0; g < 3 * H; ++g) {
        gi[g] = b_ih[g] + dot(w_ih + g * I, xt, I);
        gh[g] = b_hh[g] + dot(w_hh + g * H, hp, H);
      }
      for (std::size_t j = 0; j < H; ++j) {
        const T r = stable_sigmoid(gi[j] + gh[j]);
        const T z = stable_sigmoid(gi[H + j] + gh[H + j]);
        const T n = std::tanh(gi[2 * H + j] + r * gh[2 * H + j]);
        hn[j] = (T{1} - z) * n + z * hp[j];
        gt[j] = r;
        gt[H + j] = z;
        gt[2 * H + j] = n;
        gt[3 * H + j] = gh[2 * H + j];
      }
    }
  }
}

template <typename T>
void gru_backward_impl(const GruDims& d, const T* x, const T* w_ih, const T* w_hh, const T* h_seq,
                       const T* gates, const T* dh_final, T* dx, T* dw_ih, T* dw_hh, T* db_ih,
                       T* db_hh) {
  const std::size_t H = d.hidden;
  const std::size_t I = d.input;
  const std::size_t G = 3 * H;
  const bool drop_reset = fault_is(BackwardFault::gru_reset_gate);
  // pre-activation gradients for every (b, t): [batch][steps][3H]
  std::vector<T> dgi(d.batch * d.steps * G);
  std::vector<T> dgh(d.batch * d.steps * G);

#pragma omp parallel for schedule(static)
  for (idx bi = 0; bi < static_cast<idx>(d.batch); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    std::vector<T> dh(dh_final + b * H, dh_final + (b + 1) * H);
    std::vector<T> dprev(H);
    const T* hs = h_seq + b * (d.steps + 1) * H;
    for (std::size_t tt = d.steps; tt-- > 0;) {
      const T* gt = gates + (b * d.steps + tt) * 4 * H;
      const T* hp = hs + tt * H;
      T* gi = &dgi[(b * d.steps + tt) * G];
      T* gh = &dgh[(b * d.steps + tt) * G];
      for (std::size_t j = 0; j < H; ++j) {
        const T r = gt[j], z = gt[H + j], n = gt[2 * H + j], ghn = gt[3 * H + j];
        const T dn_pre = dh[j] * (T{1} - z) * (T{1} - n * n);
        const T dz_pre = dh[j] * (hp[j] - n) * z * (T{1} - z);
        const T dr_pre = drop_reset ? T{0} : dn_pre * ghn * r * (T{1} - r);
        gi[j] = dr_pre;
        gi[H + j] = dz_pre;
        gi[2 * H + j] = dn_pre;
        gh[j] = dr_pre;
        gh[H + j] = dz_pre;
        gh[2 * H + j] = dn_pre * r;
        dprev[j] = dh[j] * z;
      }
      for (std::size_t g = 0; g < G; ++g) {
        const T s = gh[g];
        const T* wr = w_hh + g * H;
#pragma omp simd
        for (std::size_t j = 0; j < H; ++j) dprev[j] += s * wr[j];
      }
      dh.swap(dprev);
    }
  }

#pragma omp parallel for schedule(static)
  for (idx gi_ = 0; gi_ < static_cast<idx>(G); ++gi_) {
    const auto g = static_cast<std::size_t>(gi_);
    double bi_acc = 0.0;
    double bh_acc = 0.0;
    T* wi = dw_ih + g * I;
    T* wh = dw_hh + g * H;
    for (std::size_t b = 0; b < d.batch; ++b) {
      for (std::size_t t = 0; t < d.steps; ++t) {
        const T si = dgi[(b * d.steps + t) * G + g];
        const T sh = dgh[(b * d.steps + t) * G + g];
        bi_acc += si;
        bh_acc += sh;
        const T* xt = x + (b * d.steps + t) * I;
        const T* hp = h_seq + (b * (d.steps + 1) + t) * H;
#pragma omp simd
        for (std::size_t i = 0; i < I; ++i) wi[i] += si * xt[i];
#pragma omp simd
        for (std::size_t j = 0; j < H; ++j) wh[j] += sh * hp[j];
      }
    }
    db_ih[g] += static_cast<T>(bi_acc);
    db_hh[g] += static_cast<T>(bh_acc);
  }

  if (!dx) return;
#pragma omp parallel for schedule(static)
  for (idx bi = 0; bi < static_cast<idx>(d.batch); ++bi) {
    const auto b = static_cast<std::size_t>(bi);
    for (std::size_t t = 0; t < d.steps; ++t) {
      T* xt = dx + (b * d.steps + t) * I;
      std::fill(xt, xt + I, T{0});
      const T* gi = &dgi[(b * d.steps + t) * G];
      for (std::size_t g = 0; g < G; ++g) {
        const T s = gi[g];
        const T* wr = w_ih + g * I;
#pragma omp simd
        for (std::size_t i = 0; i < I; ++i) xt[i] += s * wr[i];
      }
    }
  }
}

template <typename T>
void linear_forward_impl(std::size_t batch, std::size_t in, std::size_t out, const T* x,
                         const T* w, const T* b, T* y) {
#pragma omp parallel for schedule(static)
  for (idx bi = 0; bi < static_cast<idx>(batch); ++bi) {
    const auto n = static_cast<std::size_t>(bi);
    for (std::size_t o = 0; o < out; ++o) y[n * out + o] = b[o] + dot(w + o * in, x + n * in, in);
  }
}

template <typename T>
void linear_backward_impl(std::size_t batch, std::size_t in, std::size_t out, const T* x,
                          const T* w, const T* dy, T* dx, T* dw, T* db) {
#pragma omp parallel for schedule(static)
  for (idx oi = 0; oi < static_cast<idx>(out); ++oi) {
    const auto o = static_cast<std::size_t>(oi);
    T* wr = dw + o * in;
    double bacc = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const T g = dy[n * out + o];
      bacc += g;
      const T* xr = x + n * in;
#pragma omp simd
      for (std::size_t i = 0; i < in; ++i) wr[i] += g * xr[i];
    }
    db[o] += static_cast<T>(bacc);
  }
  if (!dx) return;
  if (fault_is(BackwardFault::linear_input)) {
    std::fill(dx, dx + batch * in, T{0});
    return;
  }
#pragma omp parallel for schedule(static)
  for (idx bi = 0; bi < static_cast<idx>(batch); ++bi) {
    const auto n = static_cast<std::size_t>(bi);
    T* xr = dx + n * in;
    std::fill(xr, xr + in, T{0});
    for (std::size_t o = 0; o < out; ++o) {
      const T g = dy[n * out + o];
      const T* wr = w + o * in;
#pragma omp simd
      for (std::size_t i = 0; i < in; ++i) xr[i] += g * wr[i];
    }
  }
}

}  // namespace

#define RAWNET_DEFINE_KERNELS(T)                                                                   \
  void conv1d_forward(const ConvDims& d, const T* x, const T* w, const T* b, T* y) {               \
    conv1d_forward_impl(d, x, w, b, y);                                                            \
  }                                                                                                \
  void conv1d_backward(const ConvDims& d, const T* x, const T* w, const T* dy, T* dx, T* dw,       \
                       T* db) {                                                                    \
    conv1d_backward_impl(d, x, w, dy, dx, dw, db);                                                 \
  }                                                                                                \
  void batchnorm_train_forward(const ChannelDims& d, const T* x, const T* gamma, const T* beta,    \
                               double eps, T* y, T* xhat, T* inv_std, double* mean, double* var) { \
    batchnorm_train_forward_impl(d, x, gamma, beta, eps, y, xhat, inv_std, mean, var);             \
  }                                                                                                \
  void batchnorm_eval_forward(const ChannelDims& d, const T* x, const T* gamma, const T* beta,     \
                              const double* mean, const double* var, double eps, T* y) {           \
    batchnorm_eval_forward_impl(d, x, gamma, beta, mean, var, eps, y);                             \
  }                                                                                                \
  void batchnorm_backward(const ChannelDims& d, const T* dy, const T* xhat, const T* gamma,        \
                          const T* inv_std, T* dx, T* dgamma, T* dbeta) {                          \
    batchnorm_backward_impl(d, dy, xhat, gamma, inv_std, dx, dgamma, dbeta);                       \
  }                                                                                                \
  void relu_forward(std::size_t n, const T* x, T* y) { relu_forward_impl(n, x, y); }               \
  void relu_backward(std::size_t n, const T* y, const T* dy, T* dx) {                              \
    relu_backward_impl(n, y, dy, dx);                                                              \
  }                                                                                                \
  void adaptive_avg_pool_forward(std::size_t rows, std::size_t length, std::size_t out_len,        \
                                 const T* x, T* y) {                                               \
    pool_forward_impl(rows, length, out_len, x, y);                                                \
  }                                                                                                \
  void adaptive_avg_pool_backward(std::size_t rows, std::size_t length, std::size_t out_len,       \
                                  const T* dy, T* dx) {                                            \
    pool_backward_impl(rows, length, out_len, dy, dx);                                             \
  }                                                                                                \
  void gru_forward(const GruDims& d, const T* x, const T* w_ih, const T* w_hh, const T* b_ih,      \
                   const T* b_hh, T* h_seq, T* gates) {                                            \
    gru_forward_impl(d, x, w_ih, w_hh, b_ih, b_hh, h_seq, gates);                                  \
  }                                                                                                \
  void gru_backward(const GruDims& d, const T* x, const T* w_ih, const T* w_hh, const T* h_seq,     \
                    const T* gates, const T* dh_final, T* dx, T* dw_ih, T* dw_hh, T* db_ih,       \
                    T* db_hh) {                                                                    \
    gru_backward_impl(d, x, w_ih, w_hh, h_seq, gates, dh_final, dx, dw_ih, dw_hh, db_ih, db_hh);  \
  }                                                                                                \
  void linear_forward(std::size_t batch, std::size_t in, std::size_t out, const T* x, const T* w,  \
                      const T* b, T* y) {                                                          \
    linear_forward_impl(batch, in, out, x, w, b, y);                                               \
  }                                                                                                \
  void linear_backward(std::size_t batch, std::size_t in, std::size_t out, const T* x, const T* w, \
                       const T* dy, T* dx, T* dw, T* db) {                                         \
    linear_backward_impl(batch, in, out, x, w, dy, dx, dw, db);                                    \
  }

RAWNET_DEFINE_KERNELS(float)
RAWNET_DEFINE_KERNELS(double)

#undef RAWNET_DEFINE_KERNELS

}  // namespace rawnet::nn::kernels
