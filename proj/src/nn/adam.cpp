#include "rawnet/nn/adam.hpp"

#include <cmath>

#include "rawnet/errors.hpp"

namespace rawnet::nn {

template <typename T>
void Adam<T>::step(const std::vector<ParamTensor<T>*>& params) {
  for (const ParamTensor<T>* p : params)
    for (std::size_t i = 0; i < p->grad.size(); ++i)
      if (!std::isfinite(static_cast<double>(p->grad[i])))
        throw TrainingError("non-finite gradient in parameter '" + p->name + "' at index " + std::to_string(i));

  if (moments_.empty()) {
    for (const ParamTensor<T>* p : params)
      moments_.push_back({p->name, std::vector<double>(p->size(), 0.0), std::vector<double>(p->size(), 0.0)});
  } else if (moments_.size() != params.size()) {
    throw ArgumentError("adam: parameter registry changed between steps");
  }

  ++t_;
  const double b1 = opts_.beta1, b2 = opts_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    ParamTensor<T>& p = *params[k];
    Moments& mo = moments_[k];
    if (mo.name != p.name || mo.m.size() != p.size())
      throw ArgumentError("adam: parameter '" + p.name + "' does not match moment buffer '" + mo.name + "'");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      mo.m[i] = b1 * mo.m[i] + (1.0 - b1) * g;
      mo.v[i] = b2 * mo.v[i] + (1.0 - b2) * g * g;
      const double mhat = mo.m[i] / c1;
      const double vhat = mo.v[i] / c2;
      p.values[i] = static_cast<T>(p.values[i] - opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps));
    }
    p.zero_grad();
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace rawnet::nn
