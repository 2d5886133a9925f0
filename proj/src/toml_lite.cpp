#include "selfrank/toml_lite.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace selfrank {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool valid_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

bool valid_key(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!valid_key_char(c)) return false;
  }
  return true;
}

[[noreturn]] void fail(const std::string& source, int line, const std::string& what) {
  throw ConfigError(source + ":" + std::to_string(line) + ": " + what);
}

// Parses a double-quoted string starting at s[0] == '"'. Returns the decoded
// value and the index one past the closing quote.
std::pair<std::string, std::size_t> parse_quoted(std::string_view s, const std::string& source,
                                                 int line) {
  std::string out;
  std::size_t i = 1;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '"') return {out, i + 1};
    if (c == '\\') {
      if (i + 1 >= s.size()) fail(source, line, "dangling escape in string");
      const char e = s[i + 1];
      switch (e) {
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        default:
          fail(source, line, std::string("unsupported escape \\") + e);
      }
      i += 2;
    } else {
      out.push_back(c);
      ++i;
    }
  }
  fail(source, line, "unterminated string");
}

ConfigTable::Value parse_scalar(std::string_view token, const std::string& source, int line) {
  if (token == "true") return true;
  if (token == "false") return false;

  // Integer: optional sign then digits only.
  {
    std::string_view t = token;
    if (!t.empty() && (t.front() == '+' || t.front() == '-')) t.remove_prefix(1);
    if (!t.empty()) {
      bool all_digits = true;
      for (char c : t) {
        if (!std::isdigit(static_cast<unsigned char>(c))) {
          all_digits = false;
          break;
        }
      }
      if (all_digits) {
        errno = 0;
        char* end = nullptr;
        const std::string buf(token);
        const long long v = std::strtoll(buf.c_str(), &end, 10);
        if (errno != 0 || end != buf.c_str() + buf.size()) {
          fail(source, line, "integer out of range: " + buf);
        }
        return static_cast<std::int64_t>(v);
      }
    }
  }

  // Float: anything strtod consumes completely (covers 1.5, 3e-5, -0.25, inf).
  {
    const std::string buf(token);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(buf.c_str(), &end);
    if (end == buf.c_str() + buf.size() && !buf.empty() && errno == 0) return v;
  }
  fail(source, line, "cannot parse value: " + std::string(token));
}

}  // namespace

ConfigTable ConfigTable::parse_string(std::string_view text, const std::string& source_name) {
  ConfigTable table;
  table.source_name_ = source_name;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? eol : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    line = trim(line);
    if (line.empty() || line.front() == '#') continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail(source_name, line_no, "missing ] in section header");
      const std::string_view name = trim(line.substr(1, line.size() - 2));
      if (!valid_key(name)) {
        fail(source_name, line_no, "bad section name: " + std::string(name));
      }
      section = std::string(name);
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) fail(source_name, line_no, "expected key = value");
    const std::string_view key_part = trim(line.substr(0, eq));
    if (!valid_key(key_part)) {
      fail(source_name, line_no, "bad key: " + std::string(key_part));
    }
    std::string_view value_part = trim(line.substr(eq + 1));
    if (value_part.empty()) fail(source_name, line_no, "missing value");

    Value value;
    if (value_part.front() == '"') {
      auto [str, consumed] = parse_quoted(value_part, source_name, line_no);
      const std::string_view rest = trim(value_part.substr(consumed));
      if (!rest.empty() && rest.front() != '#') {
        fail(source_name, line_no, "trailing characters after string value");
      }
      value = str;
    } else {
      const std::size_t hash = value_part.find('#');
      if (hash != std::string_view::npos) value_part = trim(value_part.substr(0, hash));
      if (value_part.empty()) fail(source_name, line_no, "missing value");
      value = parse_scalar(value_part, source_name, line_no);
    }

    const std::string full_key =
        section.empty() ? std::string(key_part) : section + "." + std::string(key_part);
    if (!table.values_.emplace(full_key, std::move(value)).second) {
      fail(source_name, line_no, "duplicate key: " + full_key);
    }
  }
  return table;
}

ConfigTable ConfigTable::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

std::vector<std::string> ConfigTable::keys() const {
  std::vector<std::string> out;
  out.reserve(values_.size());
  for (const auto& [k, v] : values_) {
    (void)v;
    out.push_back(k);
  }
  return out;
}

const ConfigTable::Value* ConfigTable::find(const std::string& key) const {
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

std::string ConfigTable::get_string(const std::string& key, const std::string& fallback) const {
  const Value* v = find(key);
  if (!v) return fallback;
  if (const auto* s = std::get_if<std::string>(v)) return *s;
  throw ConfigError(source_name_ + ": key " + key + " is not a string");
}

std::int64_t ConfigTable::get_int(const std::string& key, std::int64_t fallback) const {
  const Value* v = find(key);
  if (!v) return fallback;
  if (const auto* i = std::get_if<std::int64_t>(v)) return *i;
  throw ConfigError(source_name_ + ": key " + key + " is not an integer");
}

double ConfigTable::get_double(const std::string& key, double fallback) const {
  const Value* v = find(key);
  if (!v) return fallback;
  if (const auto* d = std::get_if<double>(v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(v)) return static_cast<double>(*i);
  throw ConfigError(source_name_ + ": key " + key + " is not a number");
}

bool ConfigTable::get_bool(const std::string& key, bool fallback) const {
  const Value* v = find(key);
  if (!v) return fallback;
  if (const auto* b = std::get_if<bool>(v)) return *b;
  throw ConfigError(source_name_ + ": key " + key + " is not a boolean");
}

}  // namespace selfrank
