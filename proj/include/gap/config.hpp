#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gap::cfg {

// Flat section.key = value configuration with built-in defaults.  Files use
// INI-style sections; command-line overrides take "section.key=value" form
// and win over file values.
class KvConfig {
public:
  static KvConfig defaults();
  static KvConfig from_file(const std::string& path);

  void apply_file(const std::string& path);
  void apply_override(const std::string& assignment);  // "sec.key=value"

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

  // Sorted "key=value" lines; the byte source for config hashing.
  std::string canonical() const;
  std::string hash() const;  // 16 hex chars

  // Canonical restricted to the given section prefixes.
  std::string canonical_subset(const std::vector<std::string>& sections) const;

private:
  std::map<std::string, std::string> values_;
};

std::string hash_bytes(const std::string& bytes);

}  // namespace gap::cfg
