#pragma once

// `key = value` text files, one pair per line, `#` starts a comment.

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "piunet/tensor.hpp"

namespace piunet {

class ConfigError : public Error {
 public:
  using Error::Error;
};

class KeyValues {
 public:
  static KeyValues parse(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      }
      kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValues load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
  }

  std::string str() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write config file " + path);
    f << str();
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, const char* value) { values_[key] = value; }
  void set(const std::string& key, bool value) { values_[key] = value ? "true" : "false"; }
  template <typename N>
    requires std::is_arithmetic_v<N>
  void set(const std::string& key, N value) {
    if constexpr (std::is_floating_point_v<N>) {
      // shortest round-trip representation
      char buf[64];
      auto res = std::to_chars(buf, buf + sizeof buf, value);
      values_[key] = std::string(buf, res.ptr);
    } else {
      values_[key] = std::to_string(value);
    }
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  std::string require(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing key '" + key + "'");
    return it->second;
  }

  template <typename N>
  N get_number(const std::string& key, N fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return to_number<N>(key, it->second);
  }
  template <typename N>
  N require_number(const std::string& key) const {
    return to_number<N>(key, require(key));
  }
  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("config: '" + key + "' is not a boolean: " + it->second);
  }

  const std::map<std::string, std::string>& items() const { return values_; }
  void merge(const KeyValues& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  template <typename N>
  static N to_number(const std::string& key, const std::string& text) {
    N v{};
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
      throw ConfigError("config: '" + key + "' is not a valid number: " + text);
    }
    return v;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace piunet
