#pragma once

// Caption/audio-token pairs as JSON lines:
//   {"caption": str, "audio_tokens": [int], "label": str?}
// fine-tune records additionally carry "instruction" and "answer"
// (and optionally "answer_audio_tokens").

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "msn/io/binary.hpp"

namespace msn {

struct PairRecord {
  std::string caption;
  std::vector<std::int32_t> audio_tokens;
  std::optional<std::string> label;
  std::optional<std::string> instruction;
  std::optional<std::string> answer;
  std::vector<std::int32_t> answer_audio_tokens;
};

namespace io {

inline nlohmann::json pair_to_json(const PairRecord& p) {
  nlohmann::json j;
  j["caption"] = p.caption;
  j["audio_tokens"] = p.audio_tokens;
  if (p.label) j["label"] = *p.label;
  if (p.instruction) j["instruction"] = *p.instruction;
  if (p.answer) j["answer"] = *p.answer;
  if (!p.answer_audio_tokens.empty()) j["answer_audio_tokens"] = p.answer_audio_tokens;
  return j;
}

inline PairRecord pair_from_json(const nlohmann::json& j) {
  PairRecord p;
  if (!j.is_object() || !j.contains("caption") || !j.contains("audio_tokens")) {
    throw FormatError("pair record needs 'caption' and 'audio_tokens'");
  }
  p.caption = j.at("caption").get<std::string>();
  p.audio_tokens = j.at("audio_tokens").get<std::vector<std::int32_t>>();
  if (j.contains("label")) p.label = j.at("label").get<std::string>();
  if (j.contains("instruction")) p.instruction = j.at("instruction").get<std::string>();
  if (j.contains("answer")) p.answer = j.at("answer").get<std::string>();
  if (j.contains("answer_audio_tokens")) p.answer_audio_tokens = j.at("answer_audio_tokens").get<std::vector<std::int32_t>>();
  return p;
}

inline std::string encode_pairs(const std::vector<PairRecord>& pairs) {
  std::string out;
  for (const auto& p : pairs) out += pair_to_json(p).dump() + "\n";
  return out;
}

inline std::vector<PairRecord> decode_pairs(const std::string& text, const std::string& what = "pairs") {
  std::vector<PairRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(pair_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(what + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(what + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void save_pairs(const std::vector<PairRecord>& pairs, const std::string& path) {
  write_text(path, encode_pairs(pairs));
}

inline std::vector<PairRecord> load_pairs(const std::string& path) {
  auto bytes = read_file(path);
  return decode_pairs(std::string(bytes.begin(), bytes.end()), path);
}

}  // namespace io
}  // namespace msn
