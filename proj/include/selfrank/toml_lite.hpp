#ifndef SELFRANK_TOML_LITE_HPP_
#define SELFRANK_TOML_LITE_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "selfrank/errors.hpp"

namespace selfrank {

// Minimal key/value config reader covering the subset this project uses:
// [section] headers, quoted strings, integers, floats, booleans, and `#`
// comments. Keys are addressed as "section.key" ("key" outside any section).
class ConfigTable {
 public:
  using Value = std::variant<std::string, std::int64_t, double, bool>;

  static ConfigTable parse_file(const std::string& path);
  static ConfigTable parse_string(std::string_view text,
                                  const std::string& source_name = "<config>");

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::vector<std::string> keys() const;

  // Each getter returns the fallback when the key is absent and throws
  // ConfigError when the key holds a value of the wrong type. get_double
  // promotes integer values.
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

 private:
  const Value* find(const std::string& key) const;

  std::map<std::string, Value> values_;
  std::string source_name_;
};

}  // namespace selfrank

#endif  // SELFRANK_TOML_LITE_HPP_
