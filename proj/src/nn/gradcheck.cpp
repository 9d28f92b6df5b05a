#include "rawnet/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rawnet/rng.hpp"

namespace rawnet::nn {

GradCheckResult finite_difference_check(const std::function<double()>& loss,
                                        const std::vector<ParamTensor<double>*>& params,
                                        const GradCheckOptions& opts) {
  GradCheckResult res;
  StreamRng rng{opts.seed, 0x67726164ULL};
  for (ParamTensor<double>* p : params) {
    std::vector<std::size_t> coords(p->size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords_per_tensor != 0 && coords.size() > opts.max_coords_per_tensor) {
      deterministic_shuffle(coords, rng);
      coords.resize(opts.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double theta = p->values[i];
      const double h = opts.eps * (std::abs(theta) + 1.0);
      p->values[i] = theta + h;
      const double up = loss();
      p->values[i] = theta - h;
      const double down = loss();
      p->values[i] = theta;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.denominator_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++res.coords_checked;
      if (rel > res.max_rel_error || res.worst_param.empty()) {
        if (rel >= res.max_rel_error) {
          res.max_rel_error = rel;
          res.worst_param = p->name;
          res.worst_index = i;
          res.worst_analytic = analytic;
          res.worst_numeric = numeric;
        }
      }
    }
  }
  return res;
}

}  // namespace rawnet::nn
