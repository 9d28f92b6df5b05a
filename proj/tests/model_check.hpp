#pragma once

#include <vector>

#include "rawnet/losses.hpp"
#include "rawnet/model.hpp"
#include "rawnet/nn/gradcheck.hpp"
#include "test_util.hpp"

namespace testutil {

inline rawnet::RawNetLiteConfig reduced_config() {
  rawnet::RawNetLiteConfig c;
  c.channels = 4;
  c.n_res_blocks = 2;
  c.pool_len = 8;
  c.gru_hidden = 3;
  c.fc_hidden = 4;
  c.input_len = 64;
  c.seed = 11;
  return c;
}

// End-to-end finite-difference check of the double-precision model on a
// fixed random batch under BCE. Every parameter coordinate is checked.
inline rawnet::nn::GradCheckResult model_gradcheck(const rawnet::RawNetLiteConfig& cfg,
                                                   std::uint64_t data_seed = 5) {
  using rawnet::nn::Mode;
  rawnet::RawNetLite<double> model(cfg);
  // small non-zero biases and BN affine params so no term vanishes
  for (auto* p : model.parameters())
    if (p->shape.size() == 1) randomize(*p, data_seed + p->size(), 0.2);
  const std::size_t B = 3;
  auto x = random_tensor<double>({B, 1, cfg.input_len}, data_seed);
  const std::vector<int> y = {1, 0, 1};

  auto loss = [&]() {
    const auto p = model.forward(x, Mode::train);
    return rawnet::bce_loss(p, y, nullptr);
  };
  model.zero_grad();
  const auto p = model.forward(x, Mode::train);
  std::vector<double> g;
  rawnet::bce_loss(p, y, &g);
  model.backward(g);

  rawnet::nn::GradCheckOptions opts;
  opts.eps = 1e-6;
  return rawnet::nn::finite_difference_check(loss, model.parameters(), opts);
}

}  // namespace testutil
