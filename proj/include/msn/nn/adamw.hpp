#pragma once

#include <cmath>
#include <vector>

#include "msn/nn/layers.hpp"

namespace msn {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// AdamW with bias-corrected moments and decoupled weight decay.  Parameters
// that are not trainable are skipped, as are the frozen leading rows of a
// partially frozen table.
template <class T>
class AdamW {
 public:
  AdamW(ParameterRefs<T> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto& p : params_) {
      m_.emplace_back(p.param->value.numel(), 0.0);
      v_.emplace_back(p.param->value.numel(), 0.0);
    }
  }

  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
      auto& param = *params_[p].param;
      if (!param.trainable) continue;
      if (!param.value.has_grad()) {
        throw InvalidArgument("adamw: parameter '" + params_[p].name + "' has no gradient");
      }
      auto w = param.value.mutable_data();
      auto g = param.value.grad();
      const std::size_t row = param.value.rank() > 1 ? w.size() / param.value.dim(0) : 1;
      const std::size_t begin = param.frozen_rows * row;
      auto& m = m_[p];
      auto& v = v_[p];
      for (std::size_t i = begin; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        double wi = static_cast<double>(w[i]);
        wi *= 1.0 - cfg_.lr * cfg_.weight_decay;
        wi -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        w[i] = static_cast<T>(wi);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.param->value.zero_grad();
  }

  std::size_t steps() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  ParameterRefs<T> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t step_ = 0;
};

}  // namespace msn
