#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "msn/core/config.hpp"
#include "msn/flow/dit.hpp"
#include "msn/vq/codebook.hpp"

namespace msn {

struct TokenizerConfig {
  // model
  std::size_t seq_len = 32;
  std::size_t latent_dim = 16;
  std::size_t codebook_size = 256;
  std::size_t encoder_blocks = 2;
  std::size_t decoder_blocks = 2;
  std::size_t hidden_dim = 128;
  std::size_t head_dim = 32;
  std::size_t ffn_mult = 4;
  std::size_t timestep_dim = 256;
  Objective objective = Objective::flow_matching;
  // flow
  double sigma_min = 1e-4;
  std::size_t sample_steps = 32;
  // quantizer
  double beta = 0.25;
  double codebook_weight = 1.0;
  double usage_decay = 0.99;
  double restart_threshold = 1e-3;
  // training
  double lr = 1e-4;
  double weight_decay = 0.0;
  std::size_t epochs = 75;
  std::size_t batch_size = 8;
  std::size_t max_steps = 0;  // 0: no cap
  std::uint64_t seed = 0;

  // T=32, D=16, K=256, 2+2 blocks, hidden 128.
  static TokenizerConfig desk() { return {}; }

  static TokenizerConfig toy() {
    TokenizerConfig c;
    c.seq_len = 16;
    c.latent_dim = 8;
    c.codebook_size = 32;
    c.hidden_dim = 64;
    c.head_dim = 16;
    c.lr = 1e-3;
    return c;
  }

  // 215 x 64 latents, 8196-entry codebook, 12-block 768-wide transformers.
  static TokenizerConfig paper() {
    TokenizerConfig c;
    c.seq_len = 215;
    c.latent_dim = 64;
    c.codebook_size = 8196;
    c.encoder_blocks = 12;
    c.decoder_blocks = 12;
    c.hidden_dim = 768;
    c.head_dim = 64;
    c.batch_size = 32;
    return c;
  }

  TransformerConfig encoder_transformer() const {
    return {encoder_blocks, hidden_dim, head_dim, true, ffn_mult, seq_len};
  }

  DitConfig decoder() const {
    return {{decoder_blocks, hidden_dim, head_dim, false, ffn_mult, seq_len}, latent_dim, timestep_dim};
  }

  CodebookConfig codebook() const { return {codebook_size, latent_dim, usage_decay, restart_threshold}; }

  OtCfmConfig flow() const { return {sigma_min, sample_steps, objective}; }

  void validate() const {
    encoder_transformer().validate();
    decoder().transformer.validate();
    flow().validate();
    if (seq_len == 0 || latent_dim == 0 || codebook_size == 0) throw InvalidArgument("tokenizer: sizes must be positive");
    if (timestep_dim == 0 || timestep_dim % 2) throw InvalidArgument("tokenizer: timestep_dim must be even");
    if (batch_size == 0) throw InvalidArgument("tokenizer: batch_size must be positive");
  }

  nlohmann::json to_json() const {
    return {
        {"model.seq_len", seq_len},
        {"model.latent_dim", latent_dim},
        {"model.codebook_size", codebook_size},
        {"model.encoder_blocks", encoder_blocks},
        {"model.decoder_blocks", decoder_blocks},
        {"model.hidden_dim", hidden_dim},
        {"model.head_dim", head_dim},
        {"model.ffn_mult", ffn_mult},
        {"model.timestep_dim", timestep_dim},
        {"model.objective", objective_name(objective)},
        {"flow.sigma_min", sigma_min},
        {"flow.sample_steps", sample_steps},
        {"vq.beta", beta},
        {"vq.codebook_weight", codebook_weight},
        {"vq.usage_decay", usage_decay},
        {"vq.restart_threshold", restart_threshold},
        {"train.lr", lr},
        {"train.weight_decay", weight_decay},
        {"train.epochs", epochs},
        {"train.batch_size", batch_size},
        {"train.max_steps", max_steps},
        {"train.seed", seed},
    };
  }

  static TokenizerConfig from_json(const nlohmann::json& j) {
    TokenizerConfig c;
    nlohmann::json full = c.to_json();
    merge_config(full, j);
    c.seq_len = config_get<std::size_t>(full, "model.seq_len");
    c.latent_dim = config_get<std::size_t>(full, "model.latent_dim");
    c.codebook_size = config_get<std::size_t>(full, "model.codebook_size");
    c.encoder_blocks = config_get<std::size_t>(full, "model.encoder_blocks");
    c.decoder_blocks = config_get<std::size_t>(full, "model.decoder_blocks");
    c.hidden_dim = config_get<std::size_t>(full, "model.hidden_dim");
    c.head_dim = config_get<std::size_t>(full, "model.head_dim");
    c.ffn_mult = config_get<std::size_t>(full, "model.ffn_mult");
    c.timestep_dim = config_get<std::size_t>(full, "model.timestep_dim");
    c.objective = parse_objective(config_get<std::string>(full, "model.objective"));
    c.sigma_min = config_get<double>(full, "flow.sigma_min");
    c.sample_steps = config_get<std::size_t>(full, "flow.sample_steps");
    c.beta = config_get<double>(full, "vq.beta");
    c.codebook_weight = config_get<double>(full, "vq.codebook_weight");
    c.usage_decay = config_get<double>(full, "vq.usage_decay");
    c.restart_threshold = config_get<double>(full, "vq.restart_threshold");
    c.lr = config_get<double>(full, "train.lr");
    c.weight_decay = config_get<double>(full, "train.weight_decay");
    c.epochs = config_get<std::size_t>(full, "train.epochs");
    c.batch_size = config_get<std::size_t>(full, "train.batch_size");
    c.max_steps = config_get<std::size_t>(full, "train.max_steps");
    c.seed = config_get<std::uint64_t>(full, "train.seed");
    c.validate();
    return c;
  }
};

}  // namespace msn
