#pragma once

// Flat JSON configs with dotted keys ("train.lr") and command-line
// key=value overrides typed after the existing entry.

#include <string>
#include <vector>

#include <json.hpp>

#include "msn/core/error.hpp"

namespace msn {

inline void apply_override(nlohmann::json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw InvalidArgument("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  if (!cfg.contains(key)) throw InvalidArgument("unknown config key '" + key + "'");
  auto& slot = cfg[key];
  try {
    if (slot.is_boolean()) {
      if (raw != "true" && raw != "false") throw InvalidArgument("expected true/false");
      slot = raw == "true";
    } else if (slot.is_number_unsigned()) {
      if (raw.empty() || raw[0] == '-') throw InvalidArgument("expected a non-negative integer");
      std::size_t used = 0;
      auto v = std::stoull(raw, &used);
      if (used != raw.size()) throw InvalidArgument("expected an integer");
      slot = v;
    } else if (slot.is_number_integer()) {
      std::size_t used = 0;
      auto v = std::stoll(raw, &used);
      if (used != raw.size()) throw InvalidArgument("expected an integer");
      slot = v;
    } else if (slot.is_number()) {
      std::size_t used = 0;
      auto v = std::stod(raw, &used);
      if (used != raw.size()) throw InvalidArgument("expected a number");
      slot = v;
    } else {
      slot = raw;
    }
  } catch (const std::logic_error&) {
    throw InvalidArgument("bad value '" + raw + "' for config key '" + key + "'");
  } catch (const InvalidArgument& e) {
    throw InvalidArgument("bad value '" + raw + "' for config key '" + key + "': " + e.what());
  }
}

// Overlay `file` onto `base`, rejecting keys `base` does not know.
inline void merge_config(nlohmann::json& base, const nlohmann::json& file) {
  if (!file.is_object()) throw InvalidArgument("config file must hold a flat JSON object");
  for (auto it = file.begin(); it != file.end(); ++it) {
    if (!base.contains(it.key())) throw InvalidArgument("unknown config key '" + it.key() + "'");
    base[it.key()] = it.value();
  }
}

template <class U>
U config_get(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw InvalidArgument(std::string("config is missing key '") + key + "'");
  try {
    return j.at(key).get<U>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidArgument(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace msn
