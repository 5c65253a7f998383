#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "msn/lm/model.hpp"

namespace msn {

struct GenerateConfig {
  std::size_t max_len = 128;  // total length including the prompt
  double temperature = 1.0;   // 0 selects greedy decoding
  std::size_t top_k = 0;      // 0 keeps every candidate
  bool constrain_audio = true;
};

struct GenerationResult {
  std::vector<std::int32_t> ids;
  bool unclosed_audio = false;
  bool stopped_early = false;  // no token was allowed
};

namespace detail {

// Which ids may come next.  Inside an open span: audio ids, or eoa once at
// least one audio id was emitted.  Outside: text, or soa when at least three
// slots remain (soa, one audio id, eoa).  The last slot inside a span is
// reserved for eoa.
inline void audio_mask(const Vocab& vocab, bool open, bool span_has_audio, std::size_t remaining,
                       std::vector<bool>& allowed) {
  allowed.assign(vocab.size(), false);
  if (open) {
    if (remaining <= 1) {
      allowed[static_cast<std::size_t>(vocab.eoa())] = true;
      return;
    }
    for (std::size_t i = vocab.text_size(); i < vocab.text_size() + vocab.audio_size(); ++i) allowed[i] = true;
    if (span_has_audio) allowed[static_cast<std::size_t>(vocab.eoa())] = true;
    return;
  }
  for (std::size_t i = 0; i < vocab.text_size(); ++i) allowed[i] = true;
  if (vocab.has_audio() && remaining >= 3) allowed[static_cast<std::size_t>(vocab.soa())] = true;
}

}  // namespace detail

// Samples a continuation of `prompt` one token at a time with a key/value
// cache.  With constrain_audio, sampling is masked so that the generated
// part keeps audio spans well formed; otherwise an open span at max_len is
// reported through unclosed_audio.
template <class T>
GenerationResult generate(const LanguageModel<T>& model, std::span<const std::int32_t> prompt,
                          const GenerateConfig& cfg, Rng& rng) {
  const Vocab& vocab = model.vocab();
  if (prompt.empty()) throw InvalidArgument("generate: empty prompt");
  for (auto t : prompt) {
    if (!vocab.valid(t)) throw InvalidArgument("generate: prompt token " + std::to_string(t) + " outside vocabulary");
  }
  if (!audio_spans_well_formed(vocab, prompt, true)) throw InvalidArgument("generate: prompt has malformed audio spans");
  const std::size_t max_len = std::min(cfg.max_len, model.config().max_len);
  if (prompt.size() > max_len) throw InvalidArgument("generate: prompt longer than max_len");
  if (cfg.temperature < 0.0) throw InvalidArgument("generate: temperature must be >= 0");

  NoGradGuard no_grad;
  GenerationResult out;
  out.ids.assign(prompt.begin(), prompt.end());
  bool open = false, span_has_audio = false;
  for (auto t : prompt) {
    if (t == vocab.soa()) open = true, span_has_audio = false;
    else if (t == vocab.eoa()) open = false;
    else if (vocab.is_audio(t)) span_has_audio = true;
  }
  KvCache<T> cache;
  Tensor<T> logits;
  for (auto t : prompt) logits = model.step(t, cache);

  std::vector<bool> allowed;
  std::vector<double> p(vocab.size());
  std::vector<std::size_t> cand;
  while (out.ids.size() < max_len) {
    const std::size_t remaining = max_len - out.ids.size();
    const auto& x = logits.values();
    cand.clear();
    if (cfg.constrain_audio && vocab.has_audio()) {
      detail::audio_mask(vocab, open, span_has_audio, remaining, allowed);
      for (std::size_t i = 0; i < vocab.size(); ++i) {
        if (allowed[i]) cand.push_back(i);
      }
    } else {
      for (std::size_t i = 0; i < vocab.size(); ++i) cand.push_back(i);
    }
    if (cand.empty()) {
      out.stopped_early = true;
      break;
    }
    std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) { return x[a] > x[b]; });
    if (cfg.top_k > 0 && cand.size() > cfg.top_k) cand.resize(cfg.top_k);
    std::size_t pick = cand[0];
    if (cfg.temperature > 0.0 && cand.size() > 1) {
      const double mx = static_cast<double>(x[cand[0]]);
      double z = 0.0;
      for (std::size_t i = 0; i < cand.size(); ++i) {
        p[i] = std::exp((static_cast<double>(x[cand[i]]) - mx) / cfg.temperature);
        z += p[i];
      }
      double u = uniform01(rng) * z;
      pick = cand.back();
      for (std::size_t i = 0; i < cand.size(); ++i) {
        u -= p[i];
        if (u < 0.0) {
          pick = cand[i];
          break;
        }
      }
    }
    const auto id = static_cast<std::int32_t>(pick);
    out.ids.push_back(id);
    if (id == vocab.soa()) open = true, span_has_audio = false;
    else if (id == vocab.eoa()) open = false;
    else if (vocab.is_audio(id)) span_has_audio = true;
    if (out.ids.size() < max_len) logits = model.step(id, cache);
  }
  out.unclosed_audio = open;
  return out;
}

}  // namespace msn
