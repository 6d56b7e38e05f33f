// Copyright (c) 2026 the dvsr authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace dvsr {

/// Library version, recorded in experiment provenance files.
inline constexpr const char* kVersion = "0.1.0";

/// SHA-256 of a byte buffer, lowercase hex.
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);
/// SHA-256 of a file's contents; throws IoError if unreadable.
std::string sha256_file(const std::string& path);

/// Parse a JSON file; throws IoError / ConfigError with the path in the message.
nlohmann::json load_json(const std::string& path);
void save_json(const nlohmann::json& j, const std::string& path);

/// Fetch j[key] with a ConfigError naming the key when absent or mistyped.
template <typename T>
T json_require(const nlohmann::json& j, const std::string& key);

/// Fetch j[key] or fall back.
template <typename T>
T json_get(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

std::string format_double(double v, int precision = 6);

}  // namespace dvsr
