#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mmu/core.hpp"
#include "mmu/io.hpp"

namespace mmu {

// Flat `key = value` file. '#' starts a comment; blank lines are ignored.
class Config {
 public:
  static Config parse(std::string_view text) {
    Config c;
    std::size_t lineno = 0;
    for (auto line : split(text, '\n')) {
      ++lineno;
      if (const auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
      const std::string t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ConfigError(detail::concat("config line ", lineno, ": expected key = value"));
      const std::string key = trim(t.substr(0, eq)), val = trim(t.substr(eq + 1));
      if (key.empty()) throw ConfigError(detail::concat("config line ", lineno, ": empty key"));
      if (c.values_.count(key)) throw ConfigError("duplicate config key '" + key + "'");
      c.values_[key] = val;
    }
    return c;
  }

  static Config load(const std::string& path) { return parse(read_file(path)); }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require(const std::string& key) const {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key, double fallback) const {
    if (!has(key)) {
      used_.insert(key);
      return fallback;
    }
    return to_real(key, require(key));
  }

  long long integer(const std::string& key, long long fallback) const {
    if (!has(key)) {
      used_.insert(key);
      return fallback;
    }
    const std::string v = require(key);
    long long x = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
      throw ConfigError("config key '" + key + "' is not an integer: '" + v + "'");
    }
    return x;
  }

  bool boolean(const std::string& key, bool fallback) const {
    const std::string v = str(key, fallback ? "true" : "false");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "' is not a boolean: '" + v + "'");
  }

  // Integer list: comma-separated values and lo:hi or lo:hi:step ranges.
  std::vector<std::size_t> index_list(const std::string& key) const {
    std::vector<std::size_t> out;
    const std::string v = str(key, "");
    if (v.empty()) return out;
    for (auto part : split(v, ',')) {
      const std::string p = trim(part);
      const auto f = split(p, ':');
      const auto num = [&](std::string_view s) {
        const std::string t = trim(s);
        long long x = 0;
        const auto r = std::from_chars(t.data(), t.data() + t.size(), x);
        if (r.ec != std::errc() || r.ptr != t.data() + t.size() || x < 0) {
          throw ConfigError("config key '" + key + "': bad entry '" + p + "'");
        }
        return static_cast<std::size_t>(x);
      };
      if (f.size() == 1) {
        out.push_back(num(f[0]));
      } else if (f.size() == 2 || f.size() == 3) {
        const std::size_t lo = num(f[0]), hi = num(f[1]), step = f.size() == 3 ? num(f[2]) : 1;
        if (step == 0 || hi < lo) throw ConfigError("config key '" + key + "': bad range '" + p + "'");
        for (std::size_t m = lo; m <= hi; m += step) out.push_back(m);
      } else {
        throw ConfigError("config key '" + key + "': bad entry '" + p + "'");
      }
    }
    return out;
  }

  // Keys present in the file but never read.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

  // FNV-1a over the sorted key=value lines.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [k, v] : values_) {
      for (char ch : k + "=" + v + "\n") {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
      }
    }
    return h;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
  }

  static double to_real(const std::string& key, const std::string& v) {
    try {
      return parse_double(v);
    } catch (const IoError&) {
      throw ConfigError("config key '" + key + "' is not a number: '" + v + "'");
    }
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace mmu
