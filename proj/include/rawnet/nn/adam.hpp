#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rawnet/nn/tensor.hpp"

namespace rawnet::nn {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are bound to parameter names on
/// the first step; later steps must pass the same registry in the same order.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  /// Applies one update (step index becomes step() + 1) and zeroes the grads.
  /// Throws TrainingError naming the parameter if any gradient is non-finite;
  /// in that case no parameter is modified.
  void step(const std::vector<ParamTensor<T>*>& params);

  std::int64_t step_count() const { return t_; }
  const AdamOptions& options() const { return opts_; }

 private:
  struct Moments {
    std::string name;
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamOptions opts_;
  std::int64_t t_ = 0;
  std::vector<Moments> moments_;
};

}  // namespace rawnet::nn
