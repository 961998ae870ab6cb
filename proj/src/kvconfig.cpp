#include "mwnmt/kvconfig.hpp"

#include <charconv>
#include <fstream>
#include <istream>

#include "mwnmt/errors.hpp"

namespace mwnmt {

std::string trim(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : text) {
    if (c == sep) {
      parts.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  parts.push_back(std::move(current));
  return parts;
}

int parse_int(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  int value = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(what + ": expected an integer, got '" + text + "'");
  }
  return value;
}

double parse_double(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  try {
    std::size_t used = 0;
    const double value = std::stod(t, &used);
    if (used != t.size()) throw ConfigError(what + ": trailing characters in '" + text + "'");
    return value;
  } catch (const std::logic_error&) {
    throw ConfigError(what + ": expected a number, got '" + text + "'");
  }
}

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.entries_.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path);
  return parse(in, path);
}

void KeyValueConfig::set(std::string key, std::string value) { entries_.emplace_back(std::move(key), std::move(value)); }

bool KeyValueConfig::contains(const std::string& key) const { return get(key).has_value(); }

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->first == key) return it->second;
  }
  return std::nullopt;
}

std::vector<std::string> KeyValueConfig::get_all(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (k == key) out.push_back(v);
  }
  return out;
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  auto v = get(key);
  return v ? parse_int(*v, origin_ + ": " + key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  return v ? parse_double(*v, origin_ + ": " + key) : fallback;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

}  // namespace mwnmt
