#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>

#include <json.hpp>

#include "bilevel/errors.hpp"

// Strict JSON config access: every object is checked against its known key
// set (typos get rejected with the offending path), and type mismatches
// report the path too.

namespace bilevel::jsonutil {

using nlohmann::json;

inline void reject_unknown_keys(const json& obj, const std::string& path,
                                std::initializer_list<const char*> known) {
  if (!obj.is_object()) fail(ErrorKind::config, path + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known)
      if (key == k) { ok = true; break; }
    if (!ok) fail(ErrorKind::config, "unknown key at " + path + "." + key);
  }
}

template <typename T>
T get_or(const json& obj, const std::string& path, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::config, "bad value type at " + path + "." + key);
  }
}

template <typename T>
T require(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) fail(ErrorKind::config, "missing key " + path + "." + key);
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::config, "bad value type at " + path + "." + key);
  }
}

}  // namespace bilevel::jsonutil
