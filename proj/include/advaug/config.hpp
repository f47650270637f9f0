#pragma once
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace advaug {

uint64_t fnv1a(const std::string& s);

// flat key=value store; ordered so canonical() is stable
class Config {
 public:
  bool has(const std::string& k) const { return kv_.count(k) != 0; }
  void set(const std::string& k, const std::string& v) { kv_[k] = v; }
  void erase(const std::string& k) { kv_.erase(k); }

  const std::string& get(const std::string& k) const;
  std::string get_or(const std::string& k, const std::string& def) const;
  long get_int(const std::string& k) const;
  long get_int_or(const std::string& k, long def) const;
  double get_num(const std::string& k) const;
  double get_num_or(const std::string& k, double def) const;
  bool get_bool_or(const std::string& k, bool def) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

  // sorted key=value lines, one per entry
  std::string canonical() const;
  uint64_t hash() const { return fnv1a(canonical()); }
  // hash with every seed* key removed: identifies an experiment group across
  // seed replicas
  uint64_t group_hash() const;
  // hash over entries whose key starts with none of the given prefixes
  uint64_t hash_skipping(const std::vector<std::string>& prefixes) const;

 private:
  std::map<std::string, std::string> kv_;
};

// lines of `key = value`; '#' starts a comment; `include <path>` splices
// another file (relative paths resolve against the including file)
Config load_config(const std::string& path);
Config parse_config_text(const std::string& text, const std::string& base_dir);

// "key=value" tokens, e.g. from CLI arguments; later values win
void apply_overrides(Config& c, const std::vector<std::string>& kvs);

}  // namespace advaug
