#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace hierbias {

/// Flat key=value settings. File syntax: one `key = value` per line, '#'
/// starts a comment, blank lines ignored. Keys are dotted by convention
/// (arch.dm, finetune.lr, ...). Serialization is sorted by key, so two
/// equal configs always produce the same bytes.
class Config {
 public:
  static Config parse(std::string_view text);
  static Config from_file(const std::filesystem::path& path);

  /// Applies "key=value" overrides in order.
  void apply_overrides(const std::vector<std::string>& overrides);
  /// Copies every key of other into this config (other wins).
  void merge(const Config& other);

  bool has(std::string_view key) const;
  void set(std::string key, std::string value);
  const std::string& get(std::string_view key) const;  // UsageError when missing

  std::string get_string(std::string_view key, std::string_view fallback) const;
  long long get_int(std::string_view key, long long fallback) const;
  double get_double(std::string_view key, double fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  /// Comma-separated list.
  std::vector<std::string> get_list(std::string_view key) const;

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;
  const std::map<std::string, std::string, std::less<>>& values() const { return values_; }

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

long long parse_int(std::string_view text, std::string_view what);
double parse_double(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);
std::vector<std::string> split_list(std::string_view text);

}  // namespace hierbias
