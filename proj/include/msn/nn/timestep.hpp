#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "msn/nn/layers.hpp"

namespace msn {

// [sin(t f_0..f_{h-1}), cos(t f_0..f_{h-1})] with h = dim/2 frequencies spaced
// geometrically from 1 to 1e4.
template <class T>
std::vector<T> sinusoidal_embedding(double t, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw InvalidArgument("timestep embedding dim must be even, got " + std::to_string(dim));
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("timestep must lie in [0,1], got " + std::to_string(t));
  const std::size_t half = dim / 2;
  std::vector<T> out(dim);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = half > 1 ? std::pow(1e4, static_cast<double>(i) / static_cast<double>(half - 1)) : 1.0;
    out[i] = static_cast<T>(std::sin(t * freq));
    out[half + i] = static_cast<T>(std::cos(t * freq));
  }
  return out;
}

// Sinusoid followed by Linear -> GELU -> Linear.
template <class T>
class TimestepEmbedder {
 public:
  TimestepEmbedder() = default;
  TimestepEmbedder(std::size_t raw_dim, std::size_t out_dim, Init& init)
      : raw_dim_(raw_dim), fc1_(raw_dim, out_dim, init), fc2_(out_dim, out_dim, init) {
    if (raw_dim == 0 || raw_dim % 2 != 0) throw InvalidArgument("timestep embedding dim must be even");
  }

  // One row per entry of ts: [B, out_dim].
  Tensor<T> operator()(std::span<const double> ts) const {
    std::vector<T> raw;
    raw.reserve(ts.size() * raw_dim_);
    for (double t : ts) {
      auto row = sinusoidal_embedding<T>(t, raw_dim_);
      raw.insert(raw.end(), row.begin(), row.end());
    }
    Tensor<T> x({ts.size(), raw_dim_}, std::move(raw));
    return fc2_(gelu(fc1_(x)));
  }

  void collect(ParameterRefs<T>& out, const std::string& prefix) {
    fc1_.collect(out, prefix + ".fc1");
    fc2_.collect(out, prefix + ".fc2");
  }

  std::size_t raw_dim() const { return raw_dim_; }

 private:
  std::size_t raw_dim_ = 0;
  Linear<T> fc1_;
  Linear<T> fc2_;
};

}  // namespace msn
