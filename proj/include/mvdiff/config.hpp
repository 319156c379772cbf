#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "mvdiff/error.hpp"

namespace mvdiff {

// Flat key=value text config. Lines starting with '#' and blank lines are
// ignored; serialization is sorted by key.
struct KvConfig {
  std::map<std::string, std::string> values;

  static KvConfig parse_string(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      size_t start = line.find_first_not_of(" \t");
      if (start == std::string::npos || line[start] == '#') continue;
      const size_t eq = line.find('=', start);
      require(eq != std::string::npos, "config: missing '=' in line: " + line);
      auto trim = [](std::string s) {
        const size_t a = s.find_first_not_of(" \t");
        const size_t b = s.find_last_not_of(" \t");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      const std::string key = trim(line.substr(0, eq));
      require(!key.empty(), "config: empty key in line: " + line);
      cfg.values[key] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static KvConfig parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), "config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
  }

  std::string serialize() const {
    std::string out;
    for (const auto& [k, v] : values) out += k + "=" + v + "\n";
    return out;
  }

  bool has(const std::string& key) const { return values.count(key) > 0; }

  void set(const std::string& key, const std::string& v) { values[key] = v; }
  void set_int(const std::string& key, int64_t v) {
    values[key] = std::to_string(v);
  }
  void set_double(const std::string& key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    values[key] = buf;
  }

  std::string get_str(const std::string& key, const std::string& def) const {
    auto it = values.find(key);
    return it == values.end() ? def : it->second;
  }

  int64_t get_int(const std::string& key, int64_t def) const {
    auto it = values.find(key);
    if (it == values.end()) return def;
    try {
      return std::stoll(it->second);
    } catch (...) {
      throw Error("config: key " + key + " is not an integer: " + it->second);
    }
  }

  double get_double(const std::string& key, double def) const {
    auto it = values.find(key);
    if (it == values.end()) return def;
    try {
      return std::stod(it->second);
    } catch (...) {
      throw Error("config: key " + key + " is not a number: " + it->second);
    }
  }

  // Overlays other's entries on top of this one.
  void merge(const KvConfig& other) {
    for (const auto& [k, v] : other.values) values[k] = v;
  }
};

}  // namespace mvdiff
