#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "msn/core/rng.hpp"
#include "msn/tensor/ops.hpp"

namespace msn {

template <class T>
struct Parameter {
  Tensor<T> value;
  bool trainable = true;
  // Leading rows of a 2-D parameter that are never updated (the text block of
  // an extended embedding table).
  std::size_t frozen_rows = 0;
};

template <class T>
struct NamedParameter {
  std::string name;
  Parameter<T>* param;
};

template <class T>
using ParameterRefs = std::vector<NamedParameter<T>>;

template <class T>
std::size_t count_elements(const ParameterRefs<T>& params, bool trainable_only = false) {
  std::size_t n = 0;
  for (const auto& p : params) {
    if (trainable_only && !p.param->trainable) continue;
    std::size_t rows_total = p.param->value.rank() > 0 ? p.param->value.dim(0) : 1;
    std::size_t numel = p.param->value.numel();
    if (trainable_only && p.param->frozen_rows > 0) {
      numel = numel / rows_total * (rows_total - p.param->frozen_rows);
    }
    n += numel;
  }
  return n;
}

// Source of initial parameter values.  With meta=true nothing is allocated
// and only shapes are recorded.
struct Init {
  Rng* rng = nullptr;
  bool meta = false;

  template <class T>
  Parameter<T> normal(Shape shape, double stddev) {
    if (meta) return {Tensor<T>::meta(std::move(shape))};
    auto t = Tensor<T>::zeros(std::move(shape), true);
    fill_normal<T>(t.mutable_data(), *rng, 0.0, stddev);
    return {t};
  }

  template <class T>
  Parameter<T> constant(Shape shape, T v) {
    if (meta) return {Tensor<T>::meta(std::move(shape))};
    return {Tensor<T>::full(std::move(shape), v, true)};
  }
};

template <class T>
void set_trainable(Parameter<T>& p, bool on) {
  p.trainable = on;
  p.value.set_requires_grad(on);
  if (!on) p.value.zero_grad();
}

// Low-rank update delta_W = B * A added to a frozen base weight, scaled by
// alpha / rank.  A: [rank, d_in], B: [d_out, rank].
template <class T>
struct LoraAdapter {
  Parameter<T> a;
  Parameter<T> b;
  std::size_t rank = 0;
  double alpha = 0.0;

  LoraAdapter() = default;
  LoraAdapter(std::size_t d_in, std::size_t d_out, std::size_t r, double alpha_, Init& init)
      : rank(r), alpha(alpha_) {
    if (r == 0) throw InvalidArgument("lora rank must be positive");
    a = init.normal<T>({r, d_in}, 0.02);
    b = init.constant<T>({d_out, r}, T(0));
  }

  T scaling() const { return static_cast<T>(alpha / static_cast<double>(rank)); }
};

// W_orig x + (alpha/r) B (A x), batched over the leading dims of x.
template <class T>
Tensor<T> lora_forward(const Tensor<T>& x, const Tensor<T>& w_orig, const LoraAdapter<T>& adapter) {
  if (x.shape().back() != w_orig.dim(1) || adapter.a.value.dim(1) != w_orig.dim(1) ||
      adapter.b.value.dim(0) != w_orig.dim(0)) {
    throw ShapeError("lora_forward: input " + shape_str(x.shape()) + " incompatible with base " +
                     shape_str(w_orig.shape()) + ", A " + shape_str(adapter.a.value.shape()) + ", B " +
                     shape_str(adapter.b.value.shape()));
  }
  auto base = matmul(x, w_orig, true);
  auto low = matmul(matmul(x, adapter.a.value, true), adapter.b.value, true);
  return add(base, scale(low, adapter.scaling()));
}

template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t d_in, std::size_t d_out, Init& init, bool bias = true)
      : weight_(init.normal<T>({d_out, d_in}, 1.0 / std::sqrt(static_cast<double>(d_in)))) {
    if (bias) bias_ = init.constant<T>({d_out}, T(0));
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    Tensor<T> y = lora_ ? lora_forward(x, weight_.value, *lora_) : matmul(x, weight_.value, true);
    if (bias_) y = add(y, bias_->value);
    return y;
  }

  // Freezes the base weight and bias and attaches a trainable adapter.
  void enable_lora(std::size_t rank, double alpha, Init& init) {
    if (lora_) throw InvalidArgument("lora already enabled on this layer");
    lora_.emplace(weight_.value.dim(1), weight_.value.dim(0), rank, alpha, init);
    set_trainable(weight_, false);
    if (bias_) set_trainable(*bias_, false);
  }

  void collect(ParameterRefs<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight_});
    if (bias_) out.push_back({prefix + ".bias", &*bias_});
    if (lora_) {
      out.push_back({prefix + ".lora_a", &lora_->a});
      out.push_back({prefix + ".lora_b", &lora_->b});
    }
  }

  std::size_t in_features() const { return weight_.value.dim(1); }
  std::size_t out_features() const { return weight_.value.dim(0); }
  Parameter<T>& weight() { return weight_; }
  const Parameter<T>& weight() const { return weight_; }
  LoraAdapter<T>* lora() { return lora_ ? &*lora_ : nullptr; }

 private:
  Parameter<T> weight_;
  std::optional<Parameter<T>> bias_;
  std::optional<LoraAdapter<T>> lora_;
};

template <class T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(std::size_t dim, Init& init) : gamma_(init.constant<T>({dim}, T(1))), beta_(init.constant<T>({dim}, T(0))) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma_.value, beta_.value); }

  void collect(ParameterRefs<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", &gamma_});
    out.push_back({prefix + ".beta", &beta_});
  }

 private:
  Parameter<T> gamma_;
  Parameter<T> beta_;
};

template <class T>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::size_t dim, std::size_t mult, Init& init) : fc1_(dim, dim * mult, init), fc2_(dim * mult, dim, init) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return fc2_(gelu(fc1_(x))); }

  void collect(ParameterRefs<T>& out, const std::string& prefix) {
    fc1_.collect(out, prefix + ".fc1");
    fc2_.collect(out, prefix + ".fc2");
  }

  template <class F>
  void for_each_linear(F&& f) {
    f(fc1_);
    f(fc2_);
  }

 private:
  Linear<T> fc1_;
  Linear<T> fc2_;
};

}  // namespace msn
