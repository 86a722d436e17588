// SPDX-License-Identifier: Apache-2.0
#include "supar/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "supar/errors.hpp"

namespace supar {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool valid_key(std::string_view key) {
  if (key.empty() || key.front() == '.' || key.back() == '.') return false;
  char prev = 0;
  for (char c : key) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')) return false;
    if (c == '.' && prev == '.') return false;
    prev = c;
  }
  return true;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

ConfigScalar parse_scalar(std::string_view s) {
  s = trim(s);
  if (s.empty()) throw ConfigError("config: empty value");
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') throw ConfigError("config: unterminated string " + std::string(s));
    std::string out;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      if (s[i] == '\\' && i + 2 < s.size()) {
        const char n = s[++i];
        out += n == 'n' ? '\n' : n;
      } else if (s[i] == '"') {
        throw ConfigError("config: stray quote in " + std::string(s));
      } else {
        out += s[i];
      }
    }
    return out;
  }
  if (s == "true") return true;
  if (s == "false") return false;
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  const bool is_float = s.find_first_of(".eE") != std::string_view::npos;
  if (is_float) {
    // strtod for portability of the exact rounding.
    const std::string copy(s);
    char* end = nullptr;
    const double v = std::strtod(copy.c_str(), &end);
    if (end != copy.c_str() + copy.size()) throw ConfigError("config: malformed number " + copy);
    return v;
  }
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError("config: malformed value " + std::string(s) + " (strings need quotes)");
  return v;
}

std::string format_scalar(const ConfigScalar& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using X = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<X, std::int64_t>) {
          return std::to_string(x);
        } else if constexpr (std::is_same_v<X, double>) {
          return format_double(x);
        } else if constexpr (std::is_same_v<X, bool>) {
          return x ? "true" : "false";
        } else {
          std::string out = "\"";
          for (char c : x) {
            if (c == '"' || c == '\\') out += '\\';
            if (c == '\n') {
              out += "\\n";
              continue;
            }
            out += c;
          }
          return out + "\"";
        }
      },
      v);
}

/// Splits a list body on commas outside quotes.
std::vector<std::string_view> split_list(std::string_view body) {
  std::vector<std::string_view> parts;
  bool quoted = false;
  std::size_t start = 0;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] == '\\' && quoted) {
      ++i;
    } else if (body[i] == '"') {
      quoted = !quoted;
    } else if (body[i] == ',' && !quoted) {
      parts.push_back(body.substr(start, i - start));
      start = i + 1;
    }
  }
  parts.push_back(body.substr(start));
  return parts;
}

}  // namespace

ConfigValue parse_config_value(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '[') {
    if (text.back() != ']') throw ConfigError("config: unterminated list " + std::string(text));
    const auto body = trim(text.substr(1, text.size() - 2));
    ConfigList list;
    if (body.empty()) return list;
    for (auto part : split_list(body)) list.push_back(parse_scalar(part));
    return list;
  }
  return std::visit([](auto&& x) -> ConfigValue { return x; }, parse_scalar(text));
}

std::string format_config_value(const ConfigValue& value) {
  if (const auto* list = std::get_if<ConfigList>(&value)) {
    std::string out = "[";
    for (std::size_t i = 0; i < list->size(); ++i) out += (i ? ", " : "") + format_scalar((*list)[i]);
    return out + "]";
  }
  return std::visit(
      [](const auto& x) -> std::string {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, ConfigList>) {
          return {};
        } else {
          return format_scalar(x);
        }
      },
      value);
}

ConfigText ConfigText::parse(std::string_view text) {
  ConfigText config;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      std::ostringstream msg;
      msg << "config line " << line_no << ": expected key = value";
      throw ConfigError(msg.str());
    }
    const std::string key(trim(line.substr(0, eq)));
    if (!valid_key(key)) throw ConfigError("config line " + std::to_string(line_no) + ": bad key '" + key + "'");
    if (config.values_.contains(key))
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    try {
      config.values_[key] = parse_config_value(line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

std::string ConfigText::format() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + " = " + format_config_value(value) + "\n";
  return out;
}

const ConfigValue& ConfigText::at(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config: missing key '" + key + "'");
  return it->second;
}

void ConfigText::set(const std::string& key, ConfigValue value) {
  if (!valid_key(key)) throw ConfigError("config: bad key '" + key + "'");
  values_[key] = std::move(value);
}

void ConfigText::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  set(std::string(trim(assignment.substr(0, eq))), parse_config_value(assignment.substr(eq + 1)));
}

}  // namespace supar
