#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "lclip/error.hpp"

namespace lclip {

using Json = nlohmann::json;

// Shortest round-trip decimal formatting for all floating-point text output.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string out((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed on " + path.string());
  return out;
}

inline std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> out((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed on " + path.string());
  return out;
}

// Atomic write: temp file in the same directory, then rename.
inline void atomic_write_file(const std::filesystem::path& path, const void* data,
                              std::size_t n) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError("write failed on " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

inline void atomic_write_file(const std::filesystem::path& path, const std::string& text) {
  atomic_write_file(path, text.data(), text.size());
}

inline Json parse_json(const std::string& text, const std::string& what) {
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) throw DataError(what + ": invalid JSON");
  return j;
}

// Strict object access: every required field present with the right type,
// and no unknown keys beyond the allowed set.
inline void reject_unknown_keys(const Json& obj, const std::vector<std::string>& allowed,
                                const std::string& what) {
  if (!obj.is_object()) throw DataError(what + ": expected a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const auto& k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError(what + ": unknown key \"" + it.key() + "\"");
  }
}

inline const Json& require_field(const Json& obj, const std::string& key,
                                 const std::string& what) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError(what + ": missing required field \"" + key + "\"");
  return *it;
}

inline std::string require_string(const Json& obj, const std::string& key,
                                  const std::string& what) {
  const Json& v = require_field(obj, key, what);
  if (!v.is_string()) throw DataError(what + ": field \"" + key + "\" must be a string");
  return v.get<std::string>();
}

inline double require_number(const Json& obj, const std::string& key, const std::string& what) {
  const Json& v = require_field(obj, key, what);
  if (!v.is_number()) throw DataError(what + ": field \"" + key + "\" must be a number");
  return v.get<double>();
}

inline long require_integer(const Json& obj, const std::string& key, const std::string& what) {
  const Json& v = require_field(obj, key, what);
  if (!v.is_number_integer()) throw DataError(what + ": field \"" + key + "\" must be an integer");
  return v.get<long>();
}

}  // namespace lclip
