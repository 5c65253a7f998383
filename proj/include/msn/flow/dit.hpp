#pragma once

#include <span>
#include <vector>

#include "msn/flow/ot_cfm.hpp"
#include "msn/nn/timestep.hpp"
#include "msn/nn/transformer.hpp"

namespace msn {

struct DitConfig {
  TransformerConfig transformer{2, 128, 32, false, 4, 512};
  std::size_t latent_dim = 16;
  std::size_t timestep_dim = 256;
};

// Non-causal transformer predicting a velocity field.  The noisy state and
// the quantized condition are concatenated on the channel axis, projected to
// the hidden width, and the projected timestep embedding is added at every
// position.
template <class T>
class DitDecoder {
 public:
  DitDecoder() = default;
  DitDecoder(const DitConfig& cfg, Init& init)
      : cfg_(cfg),
        in_proj_(2 * cfg.latent_dim, cfg.transformer.hidden_dim, init),
        time_(cfg.timestep_dim, cfg.transformer.hidden_dim, init),
        stack_(with_causal(cfg.transformer, false), init),
        out_proj_(cfg.transformer.hidden_dim, cfg.latent_dim, init) {}

  // x_t, cond: [B, T, D]; t: one value per batch row.
  Tensor<T> operator()(const Tensor<T>& x_t, std::span<const double> t, const Tensor<T>& cond) const {
    if (x_t.shape() != cond.shape() || x_t.rank() != 3) {
      throw ShapeError("dit: x_t " + shape_str(x_t.shape()) + " and cond " + shape_str(cond.shape()) +
                       " must share [B,T,D]");
    }
    if (x_t.dim(2) != cfg_.latent_dim) {
      throw ShapeError("dit: latent dim " + std::to_string(x_t.dim(2)) + " != " + std::to_string(cfg_.latent_dim));
    }
    if (t.size() != x_t.dim(0)) throw ShapeError("dit: need one timestep per batch row");
    auto h = in_proj_(concat_last(x_t, cond));
    h = add(h, broadcast_steps(time_(t), x_t.dim(1)));
    return out_proj_(stack_(h));
  }

  void collect(ParameterRefs<T>& out, const std::string& prefix) {
    in_proj_.collect(out, prefix + ".in_proj");
    time_.collect(out, prefix + ".time");
    stack_.collect(out, prefix + ".stack");
    out_proj_.collect(out, prefix + ".out_proj");
  }

  const DitConfig& config() const { return cfg_; }

 private:
  static TransformerConfig with_causal(TransformerConfig c, bool causal) {
    c.causal = causal;
    return c;
  }

  DitConfig cfg_;
  Linear<T> in_proj_;
  TimestepEmbedder<T> time_;
  TransformerStack<T> stack_;
  Linear<T> out_proj_;
};

// Decoder forward under an objective.  The MSE baseline pins the timestep to 0
// and the state input to zeros.
template <class T>
Tensor<T> dit_forward(const DitDecoder<T>& model, Objective objective, const Tensor<T>& x_t,
                      std::span<const double> t, const Tensor<T>& cond) {
  if (objective == Objective::mse) {
    std::vector<double> zeros_t(cond.dim(0), 0.0);
    return model(Tensor<T>::zeros(cond.shape()), zeros_t, cond);
  }
  return model(x_t, t, cond);
}

// Integrates the learned field from x0 ~ N(0, I) to t = 1.
template <class T>
Tensor<T> euler_sample(const Tensor<T>& cond, const DitDecoder<T>& model, const OtCfmConfig& cfg, Rng& rng) {
  cfg.validate();
  NoGradGuard no_grad;
  std::vector<T> x0(cond.numel());
  fill_normal<T>(x0, rng);
  const std::size_t batch = cond.dim(0);
  auto out = euler_integrate<T>(std::move(x0), cfg.n_sample_steps, [&](const std::vector<T>& x, double t) {
    std::vector<double> ts(batch, t);
    return model(Tensor<T>(cond.shape(), x), ts, cond).values();
  });
  return Tensor<T>(cond.shape(), std::move(out));
}

// Single deterministic pass of the MSE-trained decoder.
template <class T>
Tensor<T> mse_reconstruct(const Tensor<T>& cond, const DitDecoder<T>& model) {
  NoGradGuard no_grad;
  return dit_forward<T>(model, Objective::mse, Tensor<T>(), {}, cond);
}

}  // namespace msn
