#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pdnet {

/// Flat `key=value` text: one pair per line, `#` starts a comment, blank
/// lines ignored, surrounding whitespace trimmed. Later duplicates win.
class KeyValues {
 public:
  /// `origin` names the source (a file path, "<checkpoint>") in error messages.
  static KeyValues parse(std::string_view text, std::string_view origin = "<config>");

  /// Canonical form: keys in sorted order, one `key=value` per line.
  std::string format() const;

  void set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }
  std::optional<std::string> get(const std::string& key) const;
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Copies every entry of `other` over this one.
  void merge(const KeyValues& other);

 private:
  std::map<std::string, std::string> entries_;
};

// Typed value parsing. Errors name the key.
long long parse_int(std::string_view key, std::string_view value);
std::size_t parse_size(std::string_view key, std::string_view value);
double parse_double(std::string_view key, std::string_view value);
bool parse_bool(std::string_view key, std::string_view value);
std::vector<std::size_t> parse_size_list(std::string_view key, std::string_view value);
std::vector<double> parse_double_list(std::string_view key, std::string_view value);

std::string format_double(double value);
std::string format_list(const std::vector<std::size_t>& values);
std::string format_list(const std::vector<double>& values);

}  // namespace pdnet
