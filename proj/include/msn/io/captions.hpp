#pragma once

#include <array>
#include <string>
#include <string_view>

#include "msn/core/rng.hpp"
#include "msn/core/error.hpp"

namespace msn {

struct SoundEvent {
  std::string_view noun;
  std::string_view verbing;
};

inline constexpr std::array<SoundEvent, 8> kSoundEvents{{
    {"dog", "barking"},
    {"bell", "ringing"},
    {"engine", "running"},
    {"bird", "singing"},
    {"drum", "playing"},
    {"baby", "crying"},
    {"door", "creaking"},
    {"wind", "blowing"},
}};

inline constexpr std::array<std::string_view, 8> kAdjectives{
    "loud", "soft", "distant", "nearby", "sharp", "faint", "steady", "sudden"};

inline const SoundEvent& sound_event(std::size_t label) {
  if (label >= kSoundEvents.size()) {
    throw InvalidArgument("unknown class label " + std::to_string(label) + " (have " +
                          std::to_string(kSoundEvents.size()) + ")");
  }
  return kSoundEvents[label];
}

// "A {adjective} {event} is {verbing}"; the event is fixed by the label.
inline std::string gen_caption(std::size_t label, Rng& rng) {
  const auto& ev = sound_event(label);
  std::uniform_int_distribution<std::size_t> pick(0, kAdjectives.size() - 1);
  std::string out = "A ";
  out += kAdjectives[pick(rng)];
  out += ' ';
  out += ev.noun;
  out += " is ";
  out += ev.verbing;
  return out;
}

}  // namespace msn
