#include "advaug/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "advaug/errors.hpp"

namespace advaug {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

const std::string& Config::get(const std::string& k) const {
  auto it = kv_.find(k);
  if (it == kv_.end()) throw ConfigError("missing config key '" + k + "'");
  return it->second;
}

std::string Config::get_or(const std::string& k, const std::string& def) const {
  auto it = kv_.find(k);
  return it == kv_.end() ? def : it->second;
}

long Config::get_int(const std::string& k) const {
  const std::string& v = get(k);
  char* end = nullptr;
  long x = std::strtol(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("key '" + k + "': '" + v + "' is not an integer");
  return x;
}

long Config::get_int_or(const std::string& k, long def) const {
  return has(k) ? get_int(k) : def;
}

double Config::get_num(const std::string& k) const {
  const std::string& v = get(k);
  char* end = nullptr;
  double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError("key '" + k + "': '" + v + "' is not a number");
  return x;
}

double Config::get_num_or(const std::string& k, double def) const {
  return has(k) ? get_num(k) : def;
}

bool Config::get_bool_or(const std::string& k, bool def) const {
  if (!has(k)) return def;
  const std::string& v = get(k);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + k + "': '" + v + "' is not a boolean");
}

std::string Config::canonical() const {
  std::string s;
  for (auto& [k, v] : kv_) {
    s += k;
    s += '=';
    s += v;
    s += '\n';
  }
  return s;
}

uint64_t Config::group_hash() const { return hash_skipping({"seed"}); }

uint64_t Config::hash_skipping(const std::vector<std::string>& prefixes) const {
  std::string s;
  for (auto& [k, v] : kv_) {
    bool skip = false;
    for (const auto& p : prefixes)
      if (k.rfind(p, 0) == 0) {
        skip = true;
        break;
      }
    if (skip) continue;
    s += k;
    s += '=';
    s += v;
    s += '\n';
  }
  return fnv1a(s);
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void parse_into(Config& c, const std::string& text, const std::string& base_dir,
                int depth) {
  if (depth > 16) throw ConfigError("config includes nested deeper than 16");
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.rfind("include ", 0) == 0) {
      std::filesystem::path p = trim(line.substr(8));
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      std::ifstream f(p, std::ios::binary);
      if (!f) throw FileError("cannot open included config " + p.string());
      std::stringstream buf;
      buf << f.rdbuf();
      parse_into(c, buf.str(), p.parent_path().string(), depth + 1);
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key=value, got '" + line + "'");
    std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    if (k.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    c.set(k, v);
  }
}

}  // namespace

Config parse_config_text(const std::string& text, const std::string& base_dir) {
  Config c;
  parse_into(c, text, base_dir, 0);
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FileError("cannot open config " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str(), std::filesystem::path(path).parent_path().string());
}

void apply_overrides(Config& c, const std::vector<std::string>& kvs) {
  for (auto& t : kvs) {
    size_t eq = t.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override '" + t + "' is not key=value");
    c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

}  // namespace advaug
