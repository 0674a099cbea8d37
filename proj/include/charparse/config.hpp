#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace charparse {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` configuration with '#' comments. Keys may repeat
/// (e.g. one `rule` line per noise rule); entry order is preserved on write.
///
/// The `resolve_*` accessors return the stored value or record and return
/// the default, so after a component has read its settings the Config holds
/// the fully resolved configuration.
class Config {
 public:
  static Config parse(std::string_view text);
  static Config load(const std::filesystem::path& path);

  std::string to_string() const;
  void save(const std::filesystem::path& path) const;

  bool has(std::string_view key) const;
  std::string get(std::string_view key) const;
  std::vector<std::string> get_all(std::string_view key) const;

  /// Replaces every entry for `key` with a single one.
  void set(std::string_view key, std::string value);
  void add(std::string_view key, std::string value);
  void erase(std::string_view key);
  /// Entries of `overrides` replace same-key entries here.
  void merge(const Config& overrides);

  std::string resolve(std::string_view key, std::string_view fallback);
  double resolve_double(std::string_view key, double fallback);
  long long resolve_int(std::string_view key, long long fallback);
  bool resolve_bool(std::string_view key, bool fallback);

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);

}  // namespace charparse
