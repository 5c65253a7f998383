#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "msn/tensor/tensor.hpp"

namespace msn {

template <class T>
using ScalarFn = std::function<Tensor<T>(const std::vector<Tensor<T>>&)>;

// Max over all input elements of |analytic - numeric| / max(|analytic|,
// |numeric|, 1e-8), with the numeric derivative from central differences.
// The step actually taken is re-read from storage so that f32 rounding of
// x +/- eps does not bias the estimate.
template <class T>
double grad_check(const ScalarFn<T>& fn, std::vector<Tensor<T>> inputs, double eps) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  fn(inputs).backward();
  std::vector<std::vector<T>> analytic;
  for (auto& in : inputs) {
    analytic.emplace_back(in.has_grad() ? std::vector<T>(in.grad().begin(), in.grad().end())
                                        : std::vector<T>(in.numel(), T(0)));
  }
  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    auto data = inputs[p].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const T saved = data[i];
      data[i] = static_cast<T>(static_cast<double>(saved) + eps);
      const double hi_x = static_cast<double>(data[i]);
      const double hi = static_cast<double>(fn(inputs).item());
      data[i] = static_cast<T>(static_cast<double>(saved) - eps);
      const double lo_x = static_cast<double>(data[i]);
      const double lo = static_cast<double>(fn(inputs).item());
      data[i] = saved;
      const double numeric = (hi - lo) / (hi_x - lo_x);
      const double a = static_cast<double>(analytic[p][i]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  for (auto& in : inputs) in.zero_grad();
  return worst;
}

}  // namespace msn
