// Parallel kernels vs the serial reference at model-sized shapes.

#include <benchmark/benchmark.h>

#include "rawnet/model.hpp"
#include "rawnet/nn/kernels.hpp"
#include "test_util.hpp"

namespace {

using namespace rawnet::nn;
using testutil::random_tensor;

constexpr std::size_t kB = 16, kC = 64, kL = 48000;

template <bool Parallel>
void BM_conv_forward(benchmark::State& st) {
  const ConvDims d{kB, kC, kC, kL};
  auto x = random_tensor<float>({kB, kC, kL}, 1);
  auto w = random_tensor<float>({kC, kC, 3}, 2);
  auto b = random_tensor<float>({kC}, 3);
  std::vector<float> y(x.size());
  for (auto _ : st) {
    if constexpr (Parallel) kernels::conv1d_forward(d, x.ptr(), w.ptr(), b.ptr(), y.data());
    else reference::conv1d_forward(d, x.ptr(), w.ptr(), b.ptr(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(kB * kL));
}

template <bool Parallel>
void BM_conv_backward(benchmark::State& st) {
  const ConvDims d{kB, kC, kC, kL};
  auto x = random_tensor<float>({kB, kC, kL}, 1);
  auto w = random_tensor<float>({kC, kC, 3}, 2);
  auto dy = random_tensor<float>({kB, kC, kL}, 3);
  std::vector<float> dx(x.size()), dw(w.size()), db(kC);
  for (auto _ : st) {
    if constexpr (Parallel) kernels::conv1d_backward(d, x.ptr(), w.ptr(), dy.ptr(), dx.data(), dw.data(), db.data());
    else reference::conv1d_backward(d, x.ptr(), w.ptr(), dy.ptr(), dx.data(), dw.data(), db.data());
    benchmark::DoNotOptimize(dw.data());
  }
}

template <bool Parallel>
void BM_batchnorm_train(benchmark::State& st) {
  const ChannelDims d{kB, kC, kL};
  auto x = random_tensor<float>({kB, kC, kL}, 1);
  std::vector<float> g(kC, 1.0f), be(kC, 0.0f), y(x.size()), xh(x.size()), is(kC);
  std::vector<double> m(kC), v(kC);
  for (auto _ : st) {
    if constexpr (Parallel)
      kernels::batchnorm_train_forward(d, x.ptr(), g.data(), be.data(), 1e-5, y.data(), xh.data(), is.data(), m.data(), v.data());
    else
      reference::batchnorm_train_forward(d, x.ptr(), g.data(), be.data(), 1e-5, y.data(), xh.data(), is.data(), m.data(), v.data());
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_gru_forward(benchmark::State& st) {
  const GruDims d{kB, 128, kC, 128};
  auto x = random_tensor<float>({kB, 128, kC}, 1);
  auto wih = random_tensor<float>({384, kC}, 2, 0.1);
  auto whh = random_tensor<float>({384, 128}, 3, 0.1);
  std::vector<float> bih(384), bhh(384), h(kB * 129 * 128), g(kB * 128 * 512);
  for (auto _ : st) {
    if constexpr (Parallel) kernels::gru_forward(d, x.ptr(), wih.ptr(), whh.ptr(), bih.data(), bhh.data(), h.data(), g.data());
    else reference::gru_forward(d, x.ptr(), wih.ptr(), whh.ptr(), bih.data(), bhh.data(), h.data(), g.data());
    benchmark::DoNotOptimize(h.data());
  }
}

void BM_model_train_step(benchmark::State& st) {
  rawnet::Model m(rawnet::RawNetLiteConfig{});
  auto x = random_tensor<float>({static_cast<std::size_t>(st.range(0)), 1, kL}, 4);
  std::vector<float> g(x.dim(0), 0.1f);
  for (auto _ : st) {
    m.forward(x, Mode::train);
    m.backward(g);
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

}  // namespace

BENCHMARK(BM_conv_forward<true>)->Name("conv_forward/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_forward<false>)->Name("conv_forward/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_backward<true>)->Name("conv_backward/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_backward<false>)->Name("conv_backward/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_batchnorm_train<true>)->Name("batchnorm_train/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_batchnorm_train<false>)->Name("batchnorm_train/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_gru_forward<true>)->Name("gru_forward/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_gru_forward<false>)->Name("gru_forward/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_model_train_step)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
