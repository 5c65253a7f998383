#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "msn/flow/dit.hpp"
#include "msn/io/latent_file.hpp"
#include "msn/tokenizer/config.hpp"
#include "msn/vq/codebook.hpp"

namespace msn {

// Causal transformer over latent frames; output frame t depends only on
// input frames 0..t.
template <class T>
class CausalEncoder {
 public:
  CausalEncoder() = default;
  CausalEncoder(const TokenizerConfig& cfg, Init& init)
      : in_proj_(cfg.latent_dim, cfg.hidden_dim, init),
        stack_(cfg.encoder_transformer(), init),
        out_proj_(cfg.hidden_dim, cfg.latent_dim, init) {}

  Tensor<T> operator()(const Tensor<T>& z) const { return out_proj_(stack_(in_proj_(z))); }

  void collect(ParameterRefs<T>& out, const std::string& prefix) {
    in_proj_.collect(out, prefix + ".in_proj");
    stack_.collect(out, prefix + ".stack");
    out_proj_.collect(out, prefix + ".out_proj");
  }

 private:
  Linear<T> in_proj_;
  TransformerStack<T> stack_;
  Linear<T> out_proj_;
};

// Causal encoder -> vector quantizer -> DiT decoder.
template <class T>
class TokenizerModel {
 public:
  TokenizerModel(const TokenizerConfig& cfg, Init& init)
      : cfg_((cfg.validate(), cfg)), encoder_(cfg, init), codebook_(cfg.codebook(), init), decoder_(cfg.decoder(), init) {}

  TokenizerModel(const TokenizerModel&) = delete;
  TokenizerModel& operator=(const TokenizerModel&) = delete;

  const TokenizerConfig& config() const { return cfg_; }
  Objective objective() const { return cfg_.objective; }
  CausalEncoder<T>& encoder() { return encoder_; }
  const CausalEncoder<T>& encoder() const { return encoder_; }
  Codebook<T>& codebook() { return codebook_; }
  const Codebook<T>& codebook() const { return codebook_; }
  DitDecoder<T>& decoder() { return decoder_; }
  const DitDecoder<T>& decoder() const { return decoder_; }

  ParameterRefs<T> parameters() {
    ParameterRefs<T> out;
    encoder_.collect(out, "encoder");
    codebook_.collect(out, "codebook");
    decoder_.collect(out, "decoder");
    return out;
  }

  // [B, T, D] tensor from `count` consecutive latent frames blocks.
  Tensor<T> batch_tensor(std::span<const float> values, std::size_t count) const {
    check_values(values, count);
    std::vector<T> v(values.begin(), values.end());
    return Tensor<T>({count, values.size() / count / cfg_.latent_dim, cfg_.latent_dim}, std::move(v));
  }

  // Token indices for `count` latents laid out back to back, [count * T'].
  // Any T' <= seq_len is accepted.
  std::vector<std::int32_t> encode_to_tokens(std::span<const float> values, std::size_t count = 1) const {
    NoGradGuard no_grad;
    auto e = encoder_(batch_tensor(values, count));
    return nearest_entries<T>(e.data(), cfg_.latent_dim, codebook_.table());
  }

  std::vector<std::int32_t> encode_to_tokens(const AudioLatent& z) const {
    if (z.dim != cfg_.latent_dim) {
      throw ShapeError("encode: latent dim " + std::to_string(z.dim) + " != model dim " + std::to_string(cfg_.latent_dim));
    }
    return encode_to_tokens(z.values, 1);
  }

  // Indices for `count` sequences of equal length.  FM mode integrates the
  // learned field with n_steps Euler steps; MSE mode is a single pass.
  Tensor<T> decode_tokens(std::span<const std::int32_t> indices, std::size_t count, std::size_t n_steps, Rng& rng) const {
    if (count == 0 || indices.empty() || indices.size() % count != 0) {
      throw InvalidArgument("decode: " + std::to_string(indices.size()) + " indices do not split into " +
                            std::to_string(count) + " sequences");
    }
    const std::size_t steps = indices.size() / count;
    auto cond = lookup_entries(codebook_, indices, {count, steps});
    if (cfg_.objective == Objective::mse) return mse_reconstruct(cond, decoder_);
    OtCfmConfig flow = cfg_.flow();
    flow.n_sample_steps = n_steps;
    return euler_sample(cond, decoder_, flow, rng);
  }

  AudioLatent decode_latent(std::span<const std::int32_t> indices, std::size_t n_steps, Rng& rng) const {
    auto out = decode_tokens(indices, 1, n_steps, rng);
    return {indices.size(), cfg_.latent_dim, std::vector<float>(out.data().begin(), out.data().end()), 0, std::nullopt};
  }

 private:
  void check_values(std::span<const float> values, std::size_t count) const {
    if (count == 0 || values.empty() || values.size() % (count * cfg_.latent_dim) != 0) {
      throw ShapeError("tokenizer: " + std::to_string(values.size()) + " values are not " + std::to_string(count) +
                       " sequences of " + std::to_string(cfg_.latent_dim) + "-dim frames");
    }
    if (values.size() / count / cfg_.latent_dim > cfg_.seq_len) {
      throw ShapeError("tokenizer: sequence longer than model seq_len " + std::to_string(cfg_.seq_len));
    }
  }

  TokenizerConfig cfg_;
  CausalEncoder<T> encoder_;
  Codebook<T> codebook_;
  DitDecoder<T> decoder_;
};

// Parameter names and shapes of a configuration without allocating it.
inline std::vector<std::pair<std::string, Shape>> tokenizer_manifest(const TokenizerConfig& cfg) {
  Init init{nullptr, true};
  TokenizerModel<float> model(cfg, init);
  std::vector<std::pair<std::string, Shape>> out;
  for (auto& p : model.parameters()) out.emplace_back(p.name, p.param->value.shape());
  return out;
}

// tokens_per_clip * log2(K) / clip_seconds.
inline double bitrate(std::size_t tokens_per_clip, double clip_seconds, std::size_t codebook_size) {
  return static_cast<double>(tokens_per_clip) * std::log2(static_cast<double>(codebook_size)) / clip_seconds;
}

}  // namespace msn
