#pragma once

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msn/core/error.hpp"

namespace msn {

// Byte-level text ids [0, text_size), then K audio ids, then soa and eoa.
class Vocab {
 public:
  Vocab() = default;
  Vocab(std::size_t text_size, std::size_t audio_size) : text_(text_size), audio_(audio_size) {
    if (text_size == 0) throw InvalidArgument("vocab: text block must be nonempty");
  }

  std::size_t text_size() const { return text_; }
  std::size_t audio_size() const { return audio_; }
  std::size_t size() const { return audio_ ? text_ + audio_ + 2 : text_; }
  bool has_audio() const { return audio_ > 0; }

  std::int32_t soa() const { return id(text_ + audio_); }
  std::int32_t eoa() const { return id(text_ + audio_ + 1); }

  bool is_text(std::int32_t t) const { return t >= 0 && static_cast<std::size_t>(t) < text_; }
  bool is_audio(std::int32_t t) const {
    return t >= 0 && static_cast<std::size_t>(t) >= text_ && static_cast<std::size_t>(t) < text_ + audio_;
  }
  bool is_marker(std::int32_t t) const { return audio_ > 0 && (t == soa() || t == eoa()); }
  bool valid(std::int32_t t) const { return t >= 0 && static_cast<std::size_t>(t) < size(); }

  // Codebook index -> vocabulary id and back.
  std::int32_t audio_id(std::int32_t code) const {
    if (code < 0 || static_cast<std::size_t>(code) >= audio_) {
      throw InvalidArgument("audio code " + std::to_string(code) + " outside [0," + std::to_string(audio_) + ")");
    }
    return id(text_ + static_cast<std::size_t>(code));
  }
  std::int32_t audio_code(std::int32_t t) const {
    if (!is_audio(t)) throw InvalidArgument("token " + std::to_string(t) + " is not an audio id");
    return t - static_cast<std::int32_t>(text_);
  }

  std::vector<std::int32_t> encode_text(std::string_view text) const {
    std::vector<std::int32_t> out;
    out.reserve(text.size());
    for (unsigned char c : text) {
      if (c >= text_) throw InvalidArgument("byte " + std::to_string(c) + " outside the text vocabulary");
      out.push_back(c);
    }
    return out;
  }

  // Text bytes verbatim, audio ids as <a17>, markers as <soa>/<eoa>.
  std::string render(std::span<const std::int32_t> ids) const {
    std::string out;
    for (auto t : ids) {
      if (is_text(t) && t >= 0x20 && t < 0x7f) {
        out += static_cast<char>(t);
      } else if (is_text(t)) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "<0x%02X>", static_cast<unsigned>(t));
        out += buf;
      } else if (is_audio(t)) {
        out += "<a" + std::to_string(audio_code(t)) + ">";
      } else if (audio_ && t == soa()) {
        out += "<soa>";
      } else if (audio_ && t == eoa()) {
        out += "<eoa>";
      } else {
        throw InvalidArgument("token " + std::to_string(t) + " outside vocabulary of size " + std::to_string(size()));
      }
    }
    return out;
  }

 private:
  static std::int32_t id(std::size_t v) { return static_cast<std::int32_t>(v); }

  std::size_t text_ = 256;
  std::size_t audio_ = 0;
};

// Every soa is closed by an eoa before the next soa, spans hold only audio
// ids, and audio ids never appear outside a span.
inline bool audio_spans_well_formed(const Vocab& vocab, std::span<const std::int32_t> ids, bool allow_open_tail = false) {
  bool open = false;
  for (auto t : ids) {
    if (t == vocab.soa()) {
      if (open) return false;
      open = true;
    } else if (t == vocab.eoa()) {
      if (!open) return false;
      open = false;
    } else if (vocab.is_audio(t) != open) {
      return false;
    }
  }
  return !open || allow_open_tail;
}

}  // namespace msn
