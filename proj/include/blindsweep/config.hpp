#pragma once

#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <string>

#include "blindsweep/sweep_io.hpp"

namespace blindsweep {

// Typed access to a key=value file restricted to a declared key set.
class Config {
 public:
  Config(phantom::KeyValues kv, std::string source, const std::set<std::string>& allowed)
      : kv_(std::move(kv)), source_(std::move(source)) {
    for (const auto& [k, v] : kv_)
      if (!allowed.count(k)) throw ConfigError(source_ + ": unknown key " + k);
  }

  static Config load(const std::filesystem::path& path, const std::set<std::string>& allowed) {
    std::string text;
    try {
      text = phantom::read_text_file(path);
    } catch (const std::runtime_error& e) {
      throw ConfigError(e.what());
    }
    return Config(phantom::parse_key_values(text, path.string()), path.string(), allowed);
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& fallback) const {
    return has(key) ? kv_.at(key) : fallback;
  }

  std::string required(const std::string& key) const {
    if (!has(key)) throw ConfigError(source_ + ": missing key " + key);
    return kv_.at(key);
  }

  long integer(const std::string& key, long fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = kv_.at(key);
    char* end = nullptr;
    errno = 0;
    const long x = std::strtol(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0' || errno == ERANGE) throw ConfigError(source_ + ": " + key + " is not an integer: " + v);
    return x;
  }

  double real(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = kv_.at(key);
    char* end = nullptr;
    errno = 0;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0' || errno == ERANGE) throw ConfigError(source_ + ": " + key + " is not a number: " + v);
    return x;
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = kv_.at(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(source_ + ": " + key + " is not a boolean: " + v);
  }

  const std::string& source() const { return source_; }

 private:
  phantom::KeyValues kv_;
  std::string source_;
};

}  // namespace blindsweep
