#include <doctest.h>

#include "model_check.hpp"
#include "rawnet/nn/fault.hpp"

using rawnet::nn::BackwardFault;

TEST_CASE("every corrupted backward pass fails the end-to-end check") {
  const auto cfg = testutil::reduced_config();
  REQUIRE(testutil::model_gradcheck(cfg).max_rel_error < 1e-4);
  for (auto f : {BackwardFault::conv_padding, BackwardFault::batchnorm_mean, BackwardFault::relu_mask,
                 BackwardFault::residual_skip, BackwardFault::pool_width, BackwardFault::gru_reset_gate,
                 BackwardFault::linear_input, BackwardFault::sigmoid_slope}) {
    CAPTURE(static_cast<int>(f));
    rawnet::nn::ScopedBackwardFault guard(f);
    const auto res = testutil::model_gradcheck(cfg);
    CAPTURE(res.worst_param);
    CHECK(res.max_rel_error > 1e-2);
  }
  CHECK(rawnet::nn::backward_fault() == BackwardFault::none);
}
