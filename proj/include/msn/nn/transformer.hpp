#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "msn/nn/layers.hpp"

namespace msn {

struct TransformerConfig {
  std::size_t n_blocks = 2;
  std::size_t hidden_dim = 128;
  std::size_t head_dim = 32;
  bool causal = false;
  std::size_t ffn_mult = 4;
  std::size_t max_len = 512;

  std::size_t n_heads() const { return hidden_dim / head_dim; }

  void validate() const {
    if (n_blocks == 0 || hidden_dim == 0 || head_dim == 0) {
      throw InvalidArgument("transformer config: sizes must be positive");
    }
    if (hidden_dim % head_dim != 0) {
      throw InvalidArgument("transformer config: hidden_dim " + std::to_string(hidden_dim) +
                            " not divisible by head_dim " + std::to_string(head_dim));
    }
  }

  // 12 blocks, 64-dim heads, 768 hidden.
  static TransformerConfig paper_preset(bool causal, std::size_t max_len = 215) {
    return {12, 768, 64, causal, 4, max_len};
  }
};

// Multi-head scaled dot-product attention over already-projected q, k, v of
// shape [B, T, H].
template <class T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t n_heads, bool causal) {
  if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw ShapeError("attention: q/k/v shapes " + shape_str(q.shape()) + ", " + shape_str(k.shape()) + ", " +
                     shape_str(v.shape()) + " must agree and be [B,T,H]");
  }
  const std::size_t head_dim = q.dim(2) / n_heads;
  auto qh = split_heads(q, n_heads);
  auto kh = split_heads(k, n_heads);
  auto vh = split_heads(v, n_heads);
  auto scores = scale(matmul(qh, kh, true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim))));
  return merge_heads(matmul(softmax(scores, causal), vh));
}

template <class T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const TransformerConfig& cfg, Init& init)
      : n_heads_(cfg.n_heads()),
        q_(cfg.hidden_dim, cfg.hidden_dim, init),
        k_(cfg.hidden_dim, cfg.hidden_dim, init, false),
        v_(cfg.hidden_dim, cfg.hidden_dim, init),
        o_(cfg.hidden_dim, cfg.hidden_dim, init) {}

  Tensor<T> operator()(const Tensor<T>& x, bool causal) const {
    return o_(attention(q_(x), k_(x), v_(x), n_heads_, causal));
  }

  // One new position of a single sequence, x: [1, 1, H].  Appends this
  // position's key and value to the caches and attends over all of them.
  Tensor<T> step(const Tensor<T>& x, std::vector<T>& k_cache, std::vector<T>& v_cache) const {
    auto k_new = k_(x), v_new = v_(x);
    k_cache.insert(k_cache.end(), k_new.values().begin(), k_new.values().end());
    v_cache.insert(v_cache.end(), v_new.values().begin(), v_new.values().end());
    const std::size_t h = x.dim(2), len = k_cache.size() / h;
    auto qh = split_heads(q_(x), n_heads_);
    auto kh = split_heads(Tensor<T>({1, len, h}, k_cache), n_heads_);
    auto vh = split_heads(Tensor<T>({1, len, h}, v_cache), n_heads_);
    const std::size_t head_dim = h / n_heads_;
    auto scores = scale(matmul(qh, kh, true), static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim))));
    return o_(merge_heads(matmul(softmax(scores), vh)));
  }

  void collect(ParameterRefs<T>& out, const std::string& prefix) {
    q_.collect(out, prefix + ".q");
    k_.collect(out, prefix + ".k");
    v_.collect(out, prefix + ".v");
    o_.collect(out, prefix + ".o");
  }

  template <class F>
  void for_each_linear(F&& f) {
    f(q_);
    f(k_);
    f(v_);
    f(o_);
  }

 private:
  std::size_t n_heads_ = 1;
  Linear<T> q_, k_, v_, o_;
};

// Pre-norm block: x + attn(ln1(x)), then x + ffn(ln2(x)).
template <class T>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(const TransformerConfig& cfg, Init& init)
      : ln1_(cfg.hidden_dim, init), attn_(cfg, init), ln2_(cfg.hidden_dim, init), ffn_(cfg.hidden_dim, cfg.ffn_mult, init) {}

  Tensor<T> operator()(const Tensor<T>& x, bool causal) const {
    auto h = add(x, attn_(ln1_(x), causal));
    return add(h, ffn_(ln2_(h)));
  }

  Tensor<T> step(const Tensor<T>& x, std::vector<T>& k_cache, std::vector<T>& v_cache) const {
    auto h = add(x, attn_.step(ln1_(x), k_cache, v_cache));
    return add(h, ffn_(ln2_(h)));
  }

  void collect(ParameterRefs<T>& out, const std::string& prefix) {
    ln1_.collect(out, prefix + ".ln1");
    attn_.collect(out, prefix + ".attn");
    ln2_.collect(out, prefix + ".ln2");
    ffn_.collect(out, prefix + ".ffn");
  }

  template <class F>
  void for_each_linear(F&& f) {
    attn_.for_each_linear(f);
    ffn_.for_each_linear(f);
  }

 private:
  LayerNorm<T> ln1_;
  MultiHeadAttention<T> attn_;
  LayerNorm<T> ln2_;
  FeedForward<T> ffn_;
};

// Per-block key/value history of one sequence being decoded incrementally.
template <class T>
struct KvCache {
  std::vector<std::vector<T>> keys, values;
  std::size_t length = 0;
};

// Learned absolute positions, a block stack and a final norm.  Inputs are
// already projected to hidden_dim.
template <class T>
class TransformerStack {
 public:
  TransformerStack() = default;
  TransformerStack(const TransformerConfig& cfg, Init& init)
      : cfg_(cfg), pos_(init.normal<T>({cfg.max_len, cfg.hidden_dim}, 0.02)), norm_(cfg.hidden_dim, init) {
    cfg.validate();
    blocks_.reserve(cfg.n_blocks);
    for (std::size_t i = 0; i < cfg.n_blocks; ++i) blocks_.emplace_back(cfg, init);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    if (x.rank() != 3 || x.dim(2) != cfg_.hidden_dim) {
      throw ShapeError("transformer: expected [B,T," + std::to_string(cfg_.hidden_dim) + "], got " +
                       shape_str(x.shape()));
    }
    const std::size_t steps = x.dim(1);
    if (steps > cfg_.max_len) {
      throw ShapeError("transformer: sequence length " + std::to_string(steps) + " exceeds max_len " +
                       std::to_string(cfg_.max_len));
    }
    std::vector<std::int32_t> positions(steps);
    for (std::size_t t = 0; t < steps; ++t) positions[t] = static_cast<std::int32_t>(t);
    auto h = add(x, embedding(pos_.value, std::span<const std::int32_t>(positions), {steps}));
    for (const auto& block : blocks_) h = block(h, cfg_.causal);
    return norm_(h);
  }

  // Causal stacks only: processes the next position x [1, 1, H] of a
  // sequence whose earlier positions are held in `cache`.  Matches the
  // corresponding row of operator() on the full sequence.
  Tensor<T> step(const Tensor<T>& x, KvCache<T>& cache) const {
    if (!cfg_.causal) throw InvalidArgument("transformer: incremental decoding needs a causal stack");
    if (x.rank() != 3 || x.dim(0) != 1 || x.dim(1) != 1 || x.dim(2) != cfg_.hidden_dim) {
      throw ShapeError("transformer step: expected [1,1," + std::to_string(cfg_.hidden_dim) + "], got " +
                       shape_str(x.shape()));
    }
    if (cache.length >= cfg_.max_len) {
      throw ShapeError("transformer: sequence length exceeds max_len " + std::to_string(cfg_.max_len));
    }
    cache.keys.resize(blocks_.size());
    cache.values.resize(blocks_.size());
    const std::int32_t pos = static_cast<std::int32_t>(cache.length);
    auto h = add(x, embedding(pos_.value, std::span<const std::int32_t>(&pos, 1), {1}));
    for (std::size_t i = 0; i < blocks_.size(); ++i) h = blocks_[i].step(h, cache.keys[i], cache.values[i]);
    ++cache.length;
    return norm_(h);
  }

  void collect(ParameterRefs<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".pos", &pos_});
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(out, prefix + ".blocks." + std::to_string(i));
    norm_.collect(out, prefix + ".norm");
  }

  template <class F>
  void for_each_linear(F&& f) {
    for (auto& b : blocks_) b.for_each_linear(f);
  }

  const TransformerConfig& config() const { return cfg_; }

 private:
  TransformerConfig cfg_;
  Parameter<T> pos_;
  std::vector<TransformerBlock<T>> blocks_;
  LayerNorm<T> norm_;
};

}  // namespace msn
