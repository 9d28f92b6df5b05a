#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rawnet/nn/tensor.hpp"

namespace rawnet::nn {

struct GradCheckOptions {
  double eps = 1e-5;                    // step is eps * (|theta| + 1)
  std::size_t max_coords_per_tensor = 0;  // 0 checks every coordinate
  std::uint64_t seed = 0;               // coordinate sampling
  double denominator_floor = 1e-6;      // relative error = |a - n| / max(|a|, |n|, floor)
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

/// Compares the gradients already stored in `params` against central
/// differences of `loss`. Parameter values are restored before returning.
GradCheckResult finite_difference_check(const std::function<double()>& loss,
                                        const std::vector<ParamTensor<double>*>& params,
                                        const GradCheckOptions& opts = {});

}  // namespace rawnet::nn
