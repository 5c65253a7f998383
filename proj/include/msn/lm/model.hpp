#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "msn/core/config.hpp"
#include "msn/lm/vocab.hpp"
#include "msn/nn/transformer.hpp"

namespace msn {

struct LmConfig {
  std::size_t text_vocab = 256;
  std::size_t n_blocks = 4;
  std::size_t hidden_dim = 128;
  std::size_t head_dim = 32;
  std::size_t ffn_mult = 4;
  std::size_t max_len = 512;
  double embed_init_std = 0.02;
  std::size_t lora_rank = 64;
  double lora_alpha = 128.0;

  TransformerConfig transformer() const { return {n_blocks, hidden_dim, head_dim, true, ffn_mult, max_len}; }

  void validate() const {
    transformer().validate();
    if (text_vocab == 0) throw InvalidArgument("lm config: text_vocab must be positive");
    if (lora_rank == 0) throw InvalidArgument("lm config: lora_rank must be positive");
  }

  nlohmann::json to_json() const {
    return {{"lm.text_vocab", text_vocab},   {"lm.n_blocks", n_blocks},
            {"lm.hidden_dim", hidden_dim},   {"lm.head_dim", head_dim},
            {"lm.ffn_mult", ffn_mult},       {"lm.max_len", max_len},
            {"lm.embed_init_std", embed_init_std}, {"lm.lora_rank", lora_rank},
            {"lm.lora_alpha", lora_alpha}};
  }

  static LmConfig from_json(const nlohmann::json& j) {
    LmConfig c;
    nlohmann::json full = c.to_json();
    merge_config(full, j);
    c.text_vocab = config_get<std::size_t>(full, "lm.text_vocab");
    c.n_blocks = config_get<std::size_t>(full, "lm.n_blocks");
    c.hidden_dim = config_get<std::size_t>(full, "lm.hidden_dim");
    c.head_dim = config_get<std::size_t>(full, "lm.head_dim");
    c.ffn_mult = config_get<std::size_t>(full, "lm.ffn_mult");
    c.max_len = config_get<std::size_t>(full, "lm.max_len");
    c.embed_init_std = config_get<double>(full, "lm.embed_init_std");
    c.lora_rank = config_get<std::size_t>(full, "lm.lora_rank");
    c.lora_alpha = config_get<double>(full, "lm.lora_alpha");
    c.validate();
    return c;
  }
};

// Decoder-only transformer over a Vocab with untied input and output
// embedding tables.
template <class T>
class LanguageModel {
 public:
  LanguageModel(const LmConfig& cfg, Init& init)
      : cfg_((cfg.validate(), cfg)),
        vocab_(cfg.text_vocab, 0),
        tok_(init.normal<T>({cfg.text_vocab, cfg.hidden_dim}, cfg.embed_init_std)),
        stack_(cfg.transformer(), init),
        head_(init.normal<T>({cfg.text_vocab, cfg.hidden_dim}, cfg.embed_init_std)) {}

  LanguageModel(const LanguageModel&) = delete;
  LanguageModel& operator=(const LanguageModel&) = delete;

  const LmConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  bool extended() const { return vocab_.has_audio(); }
  bool lora_enabled() const { return lora_; }

  Parameter<T>& input_embedding() { return tok_; }
  Parameter<T>& output_embedding() { return head_; }
  TransformerStack<T>& stack() { return stack_; }

  // ids: `batch` sequences of equal length laid out back to back.
  // Returns logits [batch, len, V].
  Tensor<T> forward(std::span<const std::int32_t> ids, std::size_t batch) const {
    if (batch == 0 || ids.empty() || ids.size() % batch != 0) {
      throw ShapeError("lm forward: " + std::to_string(ids.size()) + " ids do not split into " +
                       std::to_string(batch) + " sequences");
    }
    const std::size_t len = ids.size() / batch;
    auto h = stack_(embedding(tok_.value, ids, {batch, len}));
    return matmul(h, head_.value, true);
  }

  // Logits [1, 1, V] for the next position of an incrementally decoded
  // sequence.
  Tensor<T> step(std::int32_t id, KvCache<T>& cache) const {
    auto x = embedding(tok_.value, std::span<const std::int32_t>(&id, 1), {1, 1});
    return matmul(stack_.step(x, cache), head_.value, true);
  }

  // Appends K audio rows plus soa and eoa to both embedding tables, drawn
  // from N(0, init_scale^2).  The original text rows become frozen.
  void extend_vocab(std::size_t audio_size, double init_scale, Rng& rng) {
    if (extended()) throw InvalidArgument("extend_vocab: vocabulary already extended");
    if (audio_size == 0) throw InvalidArgument("extend_vocab: audio block must be nonempty");
    vocab_ = Vocab(cfg_.text_vocab, audio_size);
    extend_table(tok_, init_scale, rng);
    extend_table(head_, init_scale, rng);
  }

  // Freezes every base weight and attaches LoRA adapters (B = 0) to every
  // linear projection of every block.  Only the adapters and the non-text
  // embedding rows remain trainable.
  void enable_lora(std::size_t rank, double alpha, Rng& rng) {
    if (lora_) throw InvalidArgument("enable_lora: adapters already attached");
    ParameterRefs<T> base;
    stack_.collect(base, "stack");
    for (auto& p : base) set_trainable(*p.param, false);
    Init init{&rng, false};
    stack_.for_each_linear([&](Linear<T>& l) { l.enable_lora(rank, alpha, init); });
    for (auto* table : {&tok_, &head_}) {
      if (!extended()) set_trainable(*table, false);
    }
    lora_ = true;
  }

  void enable_lora(Rng& rng) { enable_lora(cfg_.lora_rank, cfg_.lora_alpha, rng); }

  ParameterRefs<T> parameters() {
    ParameterRefs<T> out;
    out.push_back({"embed.input", &tok_});
    stack_.collect(out, "stack");
    out.push_back({"embed.output", &head_});
    return out;
  }

 private:
  void extend_table(Parameter<T>& p, double init_scale, Rng& rng) {
    const std::size_t h = cfg_.hidden_dim, old_rows = p.value.dim(0), new_rows = vocab_.size();
    std::vector<T> v(new_rows * h);
    std::copy(p.value.values().begin(), p.value.values().end(), v.begin());
    fill_normal<T>(std::span<T>(v).subspan(old_rows * h), rng, 0.0, init_scale);
    p.value = Tensor<T>({new_rows, h}, std::move(v), true);
    p.trainable = true;
    p.frozen_rows = old_rows;
  }

  LmConfig cfg_;
  Vocab vocab_;
  Parameter<T> tok_;
  TransformerStack<T> stack_;
  Parameter<T> head_;
  bool lora_ = false;
};

}  // namespace msn
