#pragma once

#include <map>
#include <string>
#include <vector>

namespace okdad::config {

enum class Type { Int, Real, Bool, Str };

struct KeySpec {
  std::string name;
  Type type = Type::Str;
  std::string default_value;
};

/// All recognized configuration keys with their paper-default values.
const std::vector<KeySpec>& schema();

/// Flat `key = value` text. '#' starts a comment, blank lines are skipped.
/// Unknown keys, duplicate keys and type mismatches are collected and thrown
/// together, each with its line number.
class Config {
 public:
  /// Defaults only.
  Config();
  static Config from_file(const std::string& path);
  static Config from_text(const std::string& text, const std::string& origin);

  int64_t get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_str(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

  /// Canonical text with every key on one line, schema order.
  std::string render() const;

 private:
  std::map<std::string, std::string> values_;
  const KeySpec& spec(const std::string& key) const;
};

}  // namespace okdad::config
