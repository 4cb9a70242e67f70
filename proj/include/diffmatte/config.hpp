#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "diffmatte/model.hpp"

namespace diffmatte {

/// Ordered `key = value` text. Blank lines and lines starting with '#' are ignored.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text);
  static KeyValues load(const std::filesystem::path& path);

  std::string str() const;

  bool contains(const std::string& key) const { return entries_.contains(key); }
  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Typed accessors; every successful lookup marks the key as consumed.
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  /// Throws ParseError(UnknownKey) naming any key never looked up.
  void require_all_consumed() const;

 private:
  const std::string* find(const std::string& key) const;

  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> consumed_;
};

std::vector<int> parse_int_list(std::string_view text);
std::vector<double> parse_double_list(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);
/// Shortest text that reads back to the same double.
std::string format_double(double v);

/// Model configuration under keys `decoder.*` and `schedule.*`.
void write_model_config(const ModelConfig& cfg, KeyValues& kv);
ModelConfig read_model_config(const KeyValues& kv, const ModelConfig& defaults = {});

}  // namespace diffmatte
