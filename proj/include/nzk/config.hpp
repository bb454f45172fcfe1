#pragma once

// Flat `key = value` configuration.
//
//   # comment            (a '#' starts a comment anywhere on a line)
//   train.eta = 1e-3
//   train.mode = fo, zo_parametric, zo_kernel   (lists are comma separated)
//
// Keys are [A-Za-z0-9_.]+ and may appear once. Every lookup records the value
// it resolved to (explicit or default) so a run can report its full config;
// keys that were set but never read are reported as errors.

#include "nzk/common.hpp"
#include "nzk/datasets.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace nzk {

class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
      const std::string key = detail::trim(line.substr(0, eq));
      const std::string value = detail::trim(line.substr(eq + 1));
      if (key.empty()) throw ParseError("empty key", lineno);
      for (char ch : key)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.'))
          throw ParseError("invalid character in key '" + key + "'", lineno);
      if (c.values_.count(key)) throw ParseError("duplicate key '" + key + "'", lineno);
      c.values_[key] = value;
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    const std::string v = it == values_.end() ? fallback : it->second;
    resolved_[key] = v;
    return v;
  }

  std::string require_string(const std::string& key) const {
    if (!has(key)) throw ConfigError("missing required key '" + key + "'");
    return get_string(key, "");
  }

  double get_double(const std::string& key, double fallback) const {
    if (!has(key)) {
      resolved_[key] = format_double(fallback);
      return fallback;
    }
    return to_double(key, get_string(key, ""));
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) {
      resolved_[key] = std::to_string(fallback);
      return fallback;
    }
    return to_u64(key, get_string(key, ""));
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    return static_cast<std::size_t>(get_u64(key, fallback));
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const std::string v = get_string(key, fallback ? "true" : "false");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
  }

  std::vector<std::string> get_list(const std::string& key, const std::string& fallback) const {
    std::vector<std::string> out;
    for (auto& s : detail::split_csv(get_string(key, fallback))) {
      s = detail::trim(s);
      if (s.empty()) throw ConfigError("key '" + key + "': empty list element");
      out.push_back(s);
    }
    return out;
  }

  std::vector<double> get_doubles(const std::string& key, const std::string& fallback) const {
    std::vector<double> out;
    for (const auto& s : get_list(key, fallback)) out.push_back(to_double(key, s));
    return out;
  }

  std::vector<std::size_t> get_sizes(const std::string& key, const std::string& fallback) const {
    std::vector<std::size_t> out;
    for (const auto& s : get_list(key, fallback)) out.push_back(static_cast<std::size_t>(to_u64(key, s)));
    return out;
  }

  /// Every key looked up so far with the value it resolved to.
  const std::map<std::string, std::string>& resolved() const { return resolved_; }

  /// Keys present in the file that no lookup has touched.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!resolved_.count(k)) out.push_back(k);
    return out;
  }

  void reject_unused() const {
    const auto u = unused();
    if (u.empty()) return;
    std::string msg = "unknown config key(s):";
    for (const auto& k : u) msg += " " + k;
    throw ConfigError(msg);
  }

 private:
  static double to_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    if (!detail::parse_double(s, v)) throw ConfigError("key '" + key + "': expected a number, got '" + s + "'");
    return v;
  }

  static std::uint64_t to_u64(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc() && ptr == s.data() + s.size()) return v;
    // Allow integral values written in floating notation, e.g. 1e4.
    double d = 0.0;
    if (detail::parse_double(s, d) && d >= 0.0 && d == std::floor(d) && d < 1.8e19)
      return static_cast<std::uint64_t>(d);
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + s + "'");
  }

  std::map<std::string, std::string> values_;
  mutable std::map<std::string, std::string> resolved_;
};

}  // namespace nzk
