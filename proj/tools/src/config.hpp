#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mass::cli {

/// Bad input from the user: missing or malformed config, unknown keys.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sectioned `key = value` configuration. Every recognised key has a default,
/// so the resolved view always covers the full schema and can be written out
/// verbatim as a manifest.
class Config {
 public:
  /// Throws UsageError when the file is missing, empty, unparsable, or holds
  /// keys outside the schema.
  static Config load(const std::filesystem::path& path);
  /// Schema defaults only. Used by `plot`, which needs no config file.
  static Config defaults();

  std::string text(const std::string& key) const;
  double number(const std::string& key) const;
  std::uint64_t integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;
  std::vector<std::size_t> integers(const std::string& key) const;

  /// Command-line overrides; the key must be in the schema.
  void set(const std::string& key, std::string value);

  /// Relative paths resolve against the config file's directory.
  std::filesystem::path resolve_path(const std::string& key) const;

  /// (section.key, value) for the whole schema, in schema order.
  std::vector<std::pair<std::string, std::string>> resolved() const;
  /// Keys the file (or an override) set explicitly.
  bool is_set(const std::string& key) const;

 private:
  const std::string& raw(const std::string& key) const;

  std::vector<std::pair<std::string, std::string>> values_;
  std::vector<std::string> explicit_;
  std::filesystem::path base_dir_;
};

/// Parses `1,2,3` and the repetition shorthand `1*8, 0.5*2`.
std::vector<double> parse_number_list(const std::string& text);

}  // namespace mass::cli
