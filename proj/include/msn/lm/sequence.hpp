#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msn/core/rng.hpp"
#include "msn/lm/vocab.hpp"

namespace msn {

enum class Stage { pretrain, finetune };

inline const char* stage_name(Stage s) { return s == Stage::pretrain ? "pretrain" : "finetune"; }

inline Stage parse_stage(const std::string& s) {
  if (s == "pretrain") return Stage::pretrain;
  if (s == "finetune") return Stage::finetune;
  throw InvalidArgument("unknown stage '" + s + "' (expected pretrain or finetune)");
}

struct FusionSequence {
  std::vector<std::int32_t> ids;
  std::vector<float> weights;       // loss weight of each token as a prediction target
  std::vector<std::uint8_t> audio;  // 1 on soa, audio ids and eoa
  Stage stage = Stage::pretrain;

  std::size_t size() const { return ids.size(); }

  void push(std::int32_t id, float weight, bool is_audio) {
    ids.push_back(id);
    weights.push_back(weight);
    audio.push_back(is_audio ? 1 : 0);
  }

  void push_text(const Vocab& vocab, std::string_view text, float weight) {
    for (auto t : vocab.encode_text(text)) push(t, weight, false);
  }

  // soa, the codes as audio ids, eoa.
  void push_audio(const Vocab& vocab, std::span<const std::int32_t> codes, float weight) {
    push(vocab.soa(), weight, true);
    for (auto c : codes) push(vocab.audio_id(c), weight, true);
    push(vocab.eoa(), weight, true);
  }
};

inline constexpr float kTextWeight = 1.0f;
inline constexpr float kAudioWeight = 10.0f;

// (text, soa, audio, eoa) when text_first, else (soa, audio, eoa, text).
inline FusionSequence build_pretrain_example(const Vocab& vocab, std::string_view caption,
                                             std::span<const std::int32_t> codes, bool text_first) {
  if (caption.empty()) throw InvalidArgument("pretrain example: empty caption");
  if (codes.empty()) throw InvalidArgument("pretrain example: empty audio");
  FusionSequence s;
  s.stage = Stage::pretrain;
  if (text_first) s.push_text(vocab, caption, kTextWeight);
  s.push_audio(vocab, codes, kAudioWeight);
  if (!text_first) s.push_text(vocab, caption, kTextWeight);
  return s;
}

// Order chosen by a fair coin.
inline FusionSequence build_pretrain_example(const Vocab& vocab, std::string_view caption,
                                             std::span<const std::int32_t> codes, Rng& rng) {
  return build_pretrain_example(vocab, caption, codes, uniform01(rng) < 0.5);
}

// "USER: <soa>audio<eoa> {instruction} ASSISTANT: {answer}", optionally
// followed by " <soa>answer audio<eoa>".  Everything through "ASSISTANT:" has
// weight 0.
inline FusionSequence build_finetune_example(const Vocab& vocab, std::string_view instruction,
                                             std::span<const std::int32_t> codes, std::string_view answer,
                                             std::span<const std::int32_t> answer_codes = {}) {
  if (instruction.empty()) throw InvalidArgument("finetune example: empty instruction");
  if (codes.empty()) throw InvalidArgument("finetune example: empty audio");
  if (answer.empty() && answer_codes.empty()) throw InvalidArgument("finetune example: empty answer");
  FusionSequence s;
  s.stage = Stage::finetune;
  s.push_text(vocab, "USER: ", 0.0f);
  s.push_audio(vocab, codes, 0.0f);
  s.push_text(vocab, " ", 0.0f);
  s.push_text(vocab, instruction, 0.0f);
  s.push_text(vocab, " ASSISTANT:", 0.0f);
  if (!answer.empty()) {
    s.push_text(vocab, " ", kTextWeight);
    s.push_text(vocab, answer, kTextWeight);
  }
  if (!answer_codes.empty()) {
    s.push_text(vocab, " ", kTextWeight);
    s.push_audio(vocab, answer_codes, kAudioWeight);
  }
  return s;
}

// Plain text at weight 1, for training the base model before extension.
inline FusionSequence build_text_example(const Vocab& vocab, std::string_view text) {
  if (text.empty()) throw InvalidArgument("text example: empty text");
  FusionSequence s;
  s.push_text(vocab, text, kTextWeight);
  return s;
}

}  // namespace msn
