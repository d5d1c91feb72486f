#pragma once

// Flat, human-writable key-value config text: one `section.key = value` per
// line, `#` comments. Errors carry line numbers.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcpo {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in);
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text);

  bool has(const std::string& key) const;
  std::optional<std::string> raw(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Keys in file order (duplicates resolved to the last occurrence).
  const std::vector<std::string>& keys() const { return order_; }
  /// All keys beginning with `prefix`.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  void set(const std::string& key, const std::string& value);
  void erase_prefix(const std::string& prefix);

  /// Marks a key as consumed; unknown_keys() reports the rest so typos in a
  /// config file fail loudly.
  void mark_used(const std::string& key) const;
  std::vector<std::string> unused_keys() const;

  int line_of(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
  std::vector<std::string> order_;
  mutable std::map<std::string, bool> used_;
};

/// Splits a space-separated list of integers ("0 1 3").
std::vector<int> parse_int_list(const std::string& text, const std::string& what);

}  // namespace dcpo
