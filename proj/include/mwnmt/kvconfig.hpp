#pragma once

// Line-oriented "key = value" files. '#' starts a comment; keys may repeat.

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mwnmt {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& origin = "<config>");
  static KeyValueConfig load(const std::string& path);

  void set(std::string key, std::string value);
  bool contains(const std::string& key) const;
  // Last value for key, if any.
  std::optional<std::string> get(const std::string& key) const;
  std::vector<std::string> get_all(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::string origin_;
};

int parse_int(const std::string& text, const std::string& what);
double parse_double(const std::string& text, const std::string& what);
std::vector<std::string> split(const std::string& text, char sep);
std::string trim(const std::string& text);

}  // namespace mwnmt
