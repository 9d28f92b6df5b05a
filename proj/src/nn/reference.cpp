// Serial, index-by-index versions of every kernel. Slow on purpose: each
// output element is written straight from its defining formula.
#include <cmath>
#include <vector>

#include "rawnet/nn/kernels.hpp"

namespace rawnet::nn::reference {

namespace {

template <typename T>
T sigmoid(T x) {
  return x >= T{0} ? T{1} / (T{1} + std::exp(-x)) : std::exp(x) / (T{1} + std::exp(x));
}

template <typename T>
void conv_fwd(const ConvDims& d, const T* x, const T* w, const T* b, T* y) {
  const long L = static_cast<long>(d.length);
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t o = 0; o < d.out_channels; ++o)
      for (long t = 0; t < L; ++t) {
        double acc = b[o];
        for (std::size_t i = 0; i < d.in_channels; ++i)
          for (long k = 0; k < 3; ++k) {
            const long s = t + k - 1;
            if (s < 0 || s >= L) continue;
            acc += w[(o * d.in_channels + i) * 3 + k] * x[(n * d.in_channels + i) * L + s];
          }
        y[(n * d.out_channels + o) * L + t] = static_cast<T>(acc);
      }
}

template <typename T>
void conv_bwd(const ConvDims& d, const T* x, const T* w, const T* dy, T* dx, T* dw, T* db) {
  const long L = static_cast<long>(d.length);
  if (dx)
    for (std::size_t i = 0; i < d.batch * d.in_channels * d.length; ++i) dx[i] = T{0};
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t o = 0; o < d.out_channels; ++o)
      for (long t = 0; t < L; ++t) {
        const T g = dy[(n * d.out_channels + o) * L + t];
        db[o] += g;
        for (std::size_t i = 0; i < d.in_channels; ++i)
          for (long k = 0; k < 3; ++k) {
            const long s = t + k - 1;
            if (s < 0 || s >= L) continue;
            dw[(o * d.in_channels + i) * 3 + k] += g * x[(n * d.in_channels + i) * L + s];
            if (dx) dx[(n * d.in_channels + i) * L + s] += g * w[(o * d.in_channels + i) * 3 + k];
          }
      }
}

template <typename T>
void bn_train(const ChannelDims& d, const T* x, const T* gamma, const T* beta, double eps, T* y,
              T* xhat, T* inv_std, double* mean, double* var) {
  const std::size_t L = d.length;
  const double count = static_cast<double>(d.batch * L);
  for (std::size_t c = 0; c < d.channels; ++c) {
    double s = 0.0;
    for (std::size_t n = 0; n < d.batch; ++n)
      for (std::size_t t = 0; t < L; ++t) s += x[(n * d.channels + c) * L + t];
    const double m = s / count;
    double v = 0.0;
    for (std::size_t n = 0; n < d.batch; ++n)
      for (std::size_t t = 0; t < L; ++t) {
        const double dlt = x[(n * d.channels + c) * L + t] - m;
        v += dlt * dlt;
      }
    v /= count;
    mean[c] = m;
    var[c] = v;
    const double is = 1.0 / std::sqrt(v + eps);
    inv_std[c] = static_cast<T>(is);
    for (std::size_t n = 0; n < d.batch; ++n)
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t k = (n * d.channels + c) * L + t;
        xhat[k] = static_cast<T>((x[k] - m) * is);
        y[k] = gamma[c] * xhat[k] + beta[c];
      }
  }
}

template <typename T>
void bn_eval(const ChannelDims& d, const T* x, const T* gamma, const T* beta, const double* mean,
             const double* var, double eps, T* y) {
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t c = 0; c < d.channels; ++c)
      for (std::size_t t = 0; t < d.length; ++t) {
        const std::size_t k = (n * d.channels + c) * d.length + t;
        y[k] = static_cast<T>(gamma[c] * (x[k] - mean[c]) / std::sqrt(var[c] + eps) + beta[c]);
      }
}

template <typename T>
void bn_bwd(const ChannelDims& d, const T* dy, const T* xhat, const T* gamma, const T* inv_std,
            T* dx, T* dgamma, T* dbeta) {
  const std::size_t L = d.length;
  const double count = static_cast<double>(d.batch * L);
  for (std::size_t c = 0; c < d.channels; ++c) {
    double sdy = 0.0, sdyx = 0.0;
    for (std::size_t n = 0; n < d.batch; ++n)
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t k = (n * d.channels + c) * L + t;
        sdy += dy[k];
        sdyx += static_cast<double>(dy[k]) * xhat[k];
      }
    dgamma[c] += static_cast<T>(sdyx);
    dbeta[c] += static_cast<T>(sdy);
    if (!dx) continue;
    for (std::size_t n = 0; n < d.batch; ++n)
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t k = (n * d.channels + c) * L + t;
        dx[k] = static_cast<T>(gamma[c] * inv_std[c] *
                               (dy[k] - sdy / count - xhat[k] * sdyx / count));
      }
  }
}

template <typename T>
void pool_fwd(std::size_t rows, std::size_t L, std::size_t P, const T* x, T* y) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < P; ++j) {
      const std::size_t a = pool_bin_begin(j, L, P), b = pool_bin_end(j, L, P);
      double s = 0.0;
      for (std::size_t t = a; t < b; ++t) s += x[r * L + t];
      y[r * P + j] = static_cast<T>(s / static_cast<double>(b - a));
    }
}

template <typename T>
void pool_bwd(std::size_t rows, std::size_t L, std::size_t P, const T* dy, T* dx) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < L; ++t) dx[r * L + t] = T{0};
    for (std::size_t j = 0; j < P; ++j) {
      const std::size_t a = pool_bin_begin(j, L, P), b = pool_bin_end(j, L, P);
      for (std::size_t t = a; t < b; ++t)
        dx[r * L + t] += static_cast<T>(dy[r * P + j] / static_cast<double>(b - a));
    }
  }
}

template <typename T>
void gru_fwd(const GruDims& d, const T* x, const T* w_ih, const T* w_hh, const T* b_ih,
             const T* b_hh, T* h_seq, T* gates) {
  const std::size_t H = d.hidden, I = d.input, S = d.steps;
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t j = 0; j < H; ++j) h_seq[b * (S + 1) * H + j] = T{0};
    for (std::size_t t = 0; t < S; ++t) {
      const T* xt = x + (b * S + t) * I;
      const T* hp = h_seq + (b * (S + 1) + t) * H;
      T* hn = h_seq + (b * (S + 1) + t + 1) * H;
      T* gt = gates + (b * S + t) * 4 * H;
      auto affine = [&](const T* w, const T* bias, const T* v, std::size_t width, std::size_t row) {
        double acc = bias[row];
        for (std::size_t k = 0; k < width; ++k) acc += w[row * width + k] * v[k];
        return static_cast<T>(acc);
      };
      for (std::size_t j = 0; j < H; ++j) {
        const T r = sigmoid<T>(affine(w_ih, b_ih, xt, I, j) + affine(w_hh, b_hh, hp, H, j));
        const T z = sigmoid<T>(affine(w_ih, b_ih, xt, I, H + j) + affine(w_hh, b_hh, hp, H, H + j));
        const T ghn = affine(w_hh, b_hh, hp, H, 2 * H + j);
        const T n = std::tanh(affine(w_ih, b_ih, xt, I, 2 * H + j) + r * ghn);
        hn[j] = (T{1} - z) * n + z * hp[j];
        gt[j] = r;
        gt[H + j] = z;
        gt[2 * H + j] = n;
        gt[3 * H + j] = ghn;
      }
    }
  }
}

template <typename T>
void gru_bwd(const GruDims& d, const T* x, const T* w_ih, const T* w_hh, const T* h_seq,
             const T* gates, const T* dh_final, T* dx, T* dw_ih, T* dw_hh, T* db_ih, T* db_hh) {
  const std::size_t H = d.hidden, I = d.input, S = d.steps;
  if (dx)
    for (std::size_t k = 0; k < d.batch * S * I; ++k) dx[k] = T{0};
  for (std::size_t b = 0; b < d.batch; ++b) {
    std::vector<T> dh(dh_final + b * H, dh_final + (b + 1) * H);
    for (std::size_t t = S; t-- > 0;) {
      const T* gt = gates + (b * S + t) * 4 * H;
      const T* hp = h_seq + (b * (S + 1) + t) * H;
      const T* xt = x + (b * S + t) * I;
      std::vector<T> dgi(3 * H), dgh(3 * H), next(H);
      for (std::size_t j = 0; j < H; ++j) {
        const T r = gt[j], z = gt[H + j], n = gt[2 * H + j], ghn = gt[3 * H + j];
        const T dn = dh[j] * (T{1} - z);
        const T dz = dh[j] * (hp[j] - n);
        const T dn_pre = dn * (T{1} - n * n);
        const T dr = dn_pre * ghn;
        dgi[j] = dr * r * (T{1} - r);
        dgi[H + j] = dz * z * (T{1} - z);
        dgi[2 * H + j] = dn_pre;
        dgh[j] = dgi[j];
        dgh[H + j] = dgi[H + j];
        dgh[2 * H + j] = dn_pre * r;
        next[j] = dh[j] * z;
      }
      for (std::size_t g = 0; g < 3 * H; ++g) {
        db_ih[g] += dgi[g];
        db_hh[g] += dgh[g];
        for (std::size_t i = 0; i < I; ++i) {
          dw_ih[g * I + i] += dgi[g] * xt[i];
          if (dx) dx[(b * S + t) * I + i] += dgi[g] * w_ih[g * I + i];
        }
        for (std::size_t k = 0; k < H; ++k) {
          dw_hh[g * H + k] += dgh[g] * hp[k];
          next[k] += dgh[g] * w_hh[g * H + k];
        }
      }
      dh = next;
    }
  }
}

template <typename T>
void linear_fwd(std::size_t batch, std::size_t in, std::size_t out, const T* x, const T* w,
                const T* b, T* y) {
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[n * in + i];
      y[n * out + o] = static_cast<T>(acc);
    }
}

template <typename T>
void linear_bwd(std::size_t batch, std::size_t in, std::size_t out, const T* x, const T* w,
                const T* dy, T* dx, T* dw, T* db) {
  if (dx)
    for (std::size_t k = 0; k < batch * in; ++k) dx[k] = T{0};
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out; ++o) {
      const T g = dy[n * out + o];
      db[o] += g;
      for (std::size_t i = 0; i < in; ++i) {
        dw[o * in + i] += g * x[n * in + i];
        if (dx) dx[n * in + i] += g * w[o * in + i];
      }
    }
}

}  // namespace

#define RAWNET_DEFINE_REFERENCE(T)                                                                 \
  void conv1d_forward(const ConvDims& d, const T* x, const T* w, const T* b, T* y) {               \
    conv_fwd(d, x, w, b, y);                                                                       \
  }                                                                                                \
  void conv1d_backward(const ConvDims& d, const T* x, const T* w, const T* dy, T* dx, T* dw,       \
                       T* db) {                                                                    \
    conv_bwd(d, x, w, dy, dx, dw, db);                                                             \
  }                                                                                                \
  void batchnorm_train_forward(const ChannelDims& d, const T* x, const T* gamma, const T* beta,    \
                               double eps, T* y, T* xhat, T* inv_std, double* mean, double* var) { \
    bn_train(d, x, gamma, beta, eps, y, xhat, inv_std, mean, var);                                 \
  }                                                                                                \
  void batchnorm_eval_forward(const ChannelDims& d, const T* x, const T* gamma, const T* beta,     \
                              const double* mean, const double* var, double eps, T* y) {           \
    bn_eval(d, x, gamma, beta, mean, var, eps, y);                                                 \
  }                                                                                                \
  void batchnorm_backward(const ChannelDims& d, const T* dy, const T* xhat, const T* gamma,        \
                          const T* inv_std, T* dx, T* dgamma, T* dbeta) {                          \
    bn_bwd(d, dy, xhat, gamma, inv_std, dx, dgamma, dbeta);                                        \
  }                                                                                                \
  void relu_forward(std::size_t n, const T* x, T* y) {                                             \
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T{0} ? x[i] : T{0};                          \
  }                                                                                                \
  void relu_backward(std::size_t n, const T* y, const T* dy, T* dx) {                              \
    for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] > T{0} ? dy[i] : T{0};                        \
  }                                                                                                \
  void adaptive_avg_pool_forward(std::size_t rows, std::size_t length, std::size_t out_len,        \
                                 const T* x, T* y) {                                               \
    pool_fwd(rows, length, out_len, x, y);                                                         \
  }                                                                                                \
  void adaptive_avg_pool_backward(std::size_t rows, std::size_t length, std::size_t out_len,       \
                                  const T* dy, T* dx) {                                            \
    pool_bwd(rows, length, out_len, dy, dx);                                                       \
  }                                                                                                \
  void gru_forward(const GruDims& d, const T* x, const T* w_ih, const T* w_hh, const T* b_ih,      \
                   const T* b_hh, T* h_seq, T* gates) {                                            \
    gru_fwd(d, x, w_ih, w_hh, b_ih, b_hh, h_seq, gates);                                           \
  }                                                                                                \
  void gru_backward(const GruDims& d, const T* x, const T* w_ih, const T* w_hh, const T* h_seq,     \
                    const T* gates, const T* dh_final, T* dx, T* dw_ih, T* dw_hh, T* db_ih,       \
                    T* db_hh) {                                                                    \
    gru_bwd(d, x, w_ih, w_hh, h_seq, gates, dh_final, dx, dw_ih, dw_hh, db_ih, db_hh);            \
  }                                                                                                \
  void linear_forward(std::size_t batch, std::size_t in, std::size_t out, const T* x, const T* w,  \
                      const T* b, T* y) {                                                          \
    linear_fwd(batch, in, out, x, w, b, y);                                                        \
  }                                                                                                \
  void linear_backward(std::size_t batch, std::size_t in, std::size_t out, const T* x, const T* w, \
                       const T* dy, T* dx, T* dw, T* db) {                                         \
    linear_bwd(batch, in, out, x, w, dy, dx, dw, db);                                              \
  }

RAWNET_DEFINE_REFERENCE(float)
RAWNET_DEFINE_REFERENCE(double)

#undef RAWNET_DEFINE_REFERENCE

}  // namespace rawnet::nn::reference
