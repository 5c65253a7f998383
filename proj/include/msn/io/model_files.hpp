#pragma once

// A model on disk is a checkpoint plus a JSON sidecar (`<checkpoint>.json`)
// holding the configuration needed to rebuild it before loading tensors.

#include <memory>
#include <string>

#include <json.hpp>

#include "msn/io/checkpoint.hpp"
#include "msn/lm/model.hpp"
#include "msn/tokenizer/model.hpp"

namespace msn::io {

inline std::string sidecar_path(const std::string& checkpoint) { return checkpoint + ".json"; }

inline nlohmann::json read_json(const std::string& path) {
  auto bytes = read_file(path);
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_json(const std::string& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

template <class T>
void save_tokenizer(TokenizerModel<T>& model, const std::string& path) {
  save_checkpoint(model.parameters(), path);
  nlohmann::json side{{"kind", "tokenizer"}, {"config", model.config().to_json()}};
  write_json(sidecar_path(path), side);
}

template <class T>
std::unique_ptr<TokenizerModel<T>> load_tokenizer(const std::string& path) {
  const auto side = read_json(sidecar_path(path));
  if (side.value("kind", "") != "tokenizer") throw FormatError(path + ": sidecar does not describe a tokenizer");
  const auto cfg = TokenizerConfig::from_json(side.at("config"));
  Rng rng(0);
  Init init{&rng, false};
  auto model = std::make_unique<TokenizerModel<T>>(cfg, init);
  load_checkpoint(model->parameters(), path);
  return model;
}

template <class T>
void save_lm(LanguageModel<T>& model, const std::string& path) {
  save_checkpoint(model.parameters(), path);
  nlohmann::json side{{"kind", "lm"},
                      {"config", model.config().to_json()},
                      {"audio_size", model.vocab().audio_size()},
                      {"lora", model.lora_enabled()}};
  write_json(sidecar_path(path), side);
}

template <class T>
std::unique_ptr<LanguageModel<T>> load_lm(const std::string& path) {
  const auto side = read_json(sidecar_path(path));
  if (side.value("kind", "") != "lm") throw FormatError(path + ": sidecar does not describe a language model");
  const auto cfg = LmConfig::from_json(side.at("config"));
  Rng rng(0);
  Init init{&rng, false};
  auto model = std::make_unique<LanguageModel<T>>(cfg, init);
  const auto audio = side.at("audio_size").get<std::size_t>();
  if (audio > 0) model->extend_vocab(audio, cfg.embed_init_std, rng);
  if (side.at("lora").get<bool>()) model->enable_lora(rng);
  load_checkpoint(model->parameters(), path);
  return model;
}

}  // namespace msn::io
