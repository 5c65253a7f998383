#pragma once

// Optimal-transport conditional flow matching: the straight-line probability
// path between N(0, I) and data, its constant target field, the regression
// loss, and first-order Euler integration of a learned field.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "msn/core/rng.hpp"
#include "msn/tensor/ops.hpp"

namespace msn {

enum class Objective { flow_matching, mse };

inline const char* objective_name(Objective o) { return o == Objective::flow_matching ? "fm" : "mse"; }

inline Objective parse_objective(const std::string& s) {
  if (s == "fm" || s == "flow_matching") return Objective::flow_matching;
  if (s == "mse") return Objective::mse;
  throw InvalidArgument("unknown objective '" + s + "' (expected fm or mse)");
}

struct OtCfmConfig {
  double sigma_min = 1e-4;
  std::size_t n_sample_steps = 32;
  Objective objective = Objective::flow_matching;

  void validate() const {
    if (!(sigma_min >= 0.0 && sigma_min < 1.0)) throw InvalidArgument("sigma_min must lie in [0,1)");
    if (n_sample_steps < 1) throw InvalidArgument("n_sample_steps must be >= 1");
  }
};

template <class T>
struct FlowSample {
  double t = 0.0;
  std::vector<T> x0;
  std::vector<T> x1;
  std::vector<T> xt;
  std::vector<T> ut;
};

// x_t = (1 - (1 - s) t) x0 + t x1 and u_t = x1 - (1 - s) x0.  The first
// coefficient is evaluated as (1 - t) + s t so both endpoints are exact.
template <class T>
FlowSample<T> path_at(std::span<const T> x0, std::span<const T> x1, double t, double sigma_min) {
  if (x0.size() != x1.size()) throw ShapeError("path_at: x0 and x1 sizes differ");
  FlowSample<T> s;
  s.t = t;
  s.x0.assign(x0.begin(), x0.end());
  s.x1.assign(x1.begin(), x1.end());
  s.xt.resize(x0.size());
  s.ut.resize(x0.size());
  const double a = (1.0 - t) + sigma_min * t;
  const double c = 1.0 - sigma_min;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double v0 = static_cast<double>(x0[i]), v1 = static_cast<double>(x1[i]);
    s.xt[i] = static_cast<T>(a * v0 + t * v1);
    s.ut[i] = static_cast<T>(v1 - c * v0);
  }
  return s;
}

// t ~ U[0,1], x0 ~ N(0, I).
template <class T>
FlowSample<T> sample_path(std::span<const T> x1, Rng& rng, const OtCfmConfig& cfg) {
  const double t = uniform01(rng);
  std::vector<T> x0(x1.size());
  fill_normal<T>(x0, rng);
  return path_at<T>(x0, x1, t, cfg.sigma_min);
}

// Mean over all elements of (u - v)^2.
template <class T>
Tensor<T> cfm_loss(const Tensor<T>& predicted, const Tensor<T>& target) {
  if (predicted.shape() != target.shape()) {
    throw ShapeError("cfm_loss: prediction " + shape_str(predicted.shape()) + " vs target " +
                     shape_str(target.shape()));
  }
  return mean(square(sub(predicted, target)));
}

// x <- x + (1/N) v(x, i/N) for i = 0..N-1.  field(x, t) returns v.
template <class T, class Field>
std::vector<T> euler_integrate(std::vector<T> x, std::size_t n_steps, Field&& field) {
  if (n_steps < 1) throw InvalidArgument("euler_integrate: n_steps must be >= 1");
  const double h = 1.0 / static_cast<double>(n_steps);
  for (std::size_t i = 0; i < n_steps; ++i) {
    const double t = static_cast<double>(i) * h;
    const std::vector<T> v = field(static_cast<const std::vector<T>&>(x), t);
    if (v.size() != x.size()) throw ShapeError("euler_integrate: field returned wrong size");
    for (std::size_t j = 0; j < x.size(); ++j) {
      x[j] = static_cast<T>(static_cast<double>(x[j]) + h * static_cast<double>(v[j]));
      if (!std::isfinite(static_cast<double>(x[j]))) {
        throw NumericFault("euler_integrate: non-finite state at step " + std::to_string(i));
      }
    }
  }
  return x;
}

}  // namespace msn
