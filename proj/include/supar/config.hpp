// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace supar {

using ConfigScalar = std::variant<std::int64_t, double, bool, std::string>;
using ConfigList = std::vector<ConfigScalar>;
using ConfigValue = std::variant<std::int64_t, double, bool, std::string, ConfigList>;

/// Flat `dot.path = value` text. Values are integers, floats (always written
/// with a '.' or exponent, 17 significant digits), booleans, double-quoted
/// strings, or bracketed lists of scalars. Lines starting with '#' are
/// comments. Keys are kept sorted, so formatting is canonical.
class ConfigText {
 public:
  static ConfigText parse(std::string_view text);
  std::string format() const;

  bool contains(const std::string& key) const { return values_.contains(key); }
  const ConfigValue& at(const std::string& key) const;
  void set(const std::string& key, ConfigValue value);
  /// Parses `key=value` and sets it.
  void apply_override(std::string_view assignment);

  const std::map<std::string, ConfigValue>& values() const { return values_; }
  bool operator==(const ConfigText&) const = default;

 private:
  std::map<std::string, ConfigValue> values_;
};

ConfigValue parse_config_value(std::string_view text);
std::string format_config_value(const ConfigValue& value);

}  // namespace supar
