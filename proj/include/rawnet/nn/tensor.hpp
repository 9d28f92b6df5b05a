#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace rawnet::nn {

inline std::size_t shape_size(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape);

/// Dense row-major array.
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, T fill = T{0})
      : shape(std::move(s)), data(shape_size(shape), fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
};

/// Trainable array with its accumulated gradient.
template <typename T>
struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> values;
  std::vector<T> grad;

  ParamTensor() = default;
  ParamTensor(std::string n, std::vector<std::size_t> s)
      : name(std::move(n)), shape(std::move(s)), values(shape_size(shape), T{0}),
        grad(values.size(), T{0}) {}

  std::size_t size() const { return values.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T{0}); }
};

enum class Mode { train, eval };

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  bool initialized = false;  // set by a train step or a checkpoint load
};

}  // namespace rawnet::nn
