#pragma once

// JSON config plumbing shared by the generator, model and experiment
// configs. Field errors carry the path to the offending key.

#include <string>

#include <json.hpp>

#include "cota/common.hpp"

namespace cota::config {

using json = nlohmann::json;

inline json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(origin + ": " + e.what());
  }
}

inline json load_json_file(const std::string& path) {
  return parse_json(read_file(path), path);
}

inline const json& require(const json& j, const std::string& key,
                           const std::string& context) {
  if (!j.is_object() || !j.contains(key))
    throw UsageError(context + ": missing required field '" + key + "'");
  return j.at(key);
}

template <typename T>
T get_as(const json& j, const std::string& key, const std::string& context) {
  try {
    return require(j, key, context).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(context + "." + key + ": " + e.what());
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, const T& fallback,
         const std::string& context) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(context + "." + key + ": " + e.what());
  }
}

// Canonical dump (sorted keys, fixed spacing) used for config hashing.
inline std::string canonical_dump(const json& j) { return j.dump(2); }

inline std::uint64_t config_hash(const json& j) { return fnv1a64(canonical_dump(j)); }

}  // namespace cota::config
