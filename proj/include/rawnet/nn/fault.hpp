#pragma once

namespace rawnet::nn {

/// Deliberate backward-pass corruptions. Only the gradient-check mutation
/// tests set these; production code always runs with `none`.
enum class BackwardFault {
  none,
  conv_padding,        // weight gradient ignores the one-sample padding shift
  batchnorm_mean,      // drops the batch-mean term from dx
  relu_mask,           // passes gradient through negative inputs
  residual_skip,       // drops the identity-path gradient
  pool_width,          // divides by bin width + 1
  gru_reset_gate,      // drops the reset-gate gradient
  linear_input,        // zeroes the input gradient
  sigmoid_slope,       // uses p instead of p(1 - p)
};

void set_backward_fault(BackwardFault f) noexcept;
BackwardFault backward_fault() noexcept;

inline bool fault_is(BackwardFault f) noexcept { return backward_fault() == f; }

/// Restores `none` on scope exit.
class ScopedBackwardFault {
 public:
  explicit ScopedBackwardFault(BackwardFault f) noexcept { set_backward_fault(f); }
  ~ScopedBackwardFault() { set_backward_fault(BackwardFault::none); }
  ScopedBackwardFault(const ScopedBackwardFault&) = delete;
  ScopedBackwardFault& operator=(const ScopedBackwardFault&) = delete;
};

}  // namespace rawnet::nn
