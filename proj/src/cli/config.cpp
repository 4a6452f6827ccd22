#include "daf/cli/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "daf/errors.hpp"

namespace daf::cli {

namespace {

const char* kind_name(const ConfigValue::Storage& v) {
  switch (v.index()) {
    case 0: return "an integer";
    case 1: return "a real number";
    case 2: return "a boolean";
    case 3: return "a string";
    default: return "an array";
  }
}

[[noreturn]] void wrong_type(const std::string& what, const char* wanted, const ConfigValue& v) {
  throw ConfigError(what + " must be " + wanted + ", got " + kind_name(v.storage()) + " (line " +
                    std::to_string(v.line()) + ")");
}

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

// Cuts a trailing comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

ConfigValue parse_scalar(const std::string& text, long line) {
  if (text.empty()) throw ParseError("missing value", line);
  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') throw ParseError("unterminated string", line);
    std::string out;
    for (std::size_t i = 1; i + 1 < text.size(); ++i) {
      if (text[i] == '\\' && i + 2 < text.size()) {
        const char c = text[++i];
        out.push_back(c == 'n' ? '\n' : c == 't' ? '\t' : c);
      } else {
        out.push_back(text[i]);
      }
    }
    return {out, line};
  }
  if (text == "true") return {true, line};
  if (text == "false") return {false, line};
  const char* first = text.data();
  const char* last = first + text.size();
  std::int64_t i = 0;
  if (auto [p, ec] = std::from_chars(first, last, i); ec == std::errc() && p == last) return {i, line};
  double d = 0.0;
  if (auto [p, ec] = std::from_chars(first, last, d); ec == std::errc() && p == last) return {d, line};
  throw ParseError("cannot parse value '" + text + "'", line);
}

std::vector<std::string> split_array(const std::string& body, long line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (c == '"' && (i == 0 || body[i - 1] != '\\')) quoted = !quoted;
    if (c == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated string", line);
  const auto tail = trim(cur);
  if (!tail.empty()) out.push_back(tail);
  for (const auto& item : out) {
    if (item.empty()) throw ParseError("empty array element", line);
  }
  return out;
}

ConfigValue parse_value(const std::string& text, long line) {
  if (!text.empty() && text.front() == '[') {
    if (text.back() != ']') throw ParseError("unterminated array", line);
    ConfigValue::Array items;
    for (const auto& item : split_array(text.substr(1, text.size() - 2), line)) {
      if (item.front() == '[') throw ParseError("nested arrays are not supported", line);
      items.push_back(parse_scalar(item, line));
    }
    return {items, line};
  }
  return parse_scalar(text, line);
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  }
  return true;
}

}  // namespace

std::int64_t ConfigValue::as_int(const std::string& what) const {
  if (const auto* v = std::get_if<std::int64_t>(&value_)) return *v;
  wrong_type(what, "an integer", *this);
}

double ConfigValue::as_double(const std::string& what) const {
  if (const auto* v = std::get_if<double>(&value_)) return *v;
  if (const auto* v = std::get_if<std::int64_t>(&value_)) return static_cast<double>(*v);
  wrong_type(what, "a number", *this);
}

bool ConfigValue::as_bool(const std::string& what) const {
  if (const auto* v = std::get_if<bool>(&value_)) return *v;
  wrong_type(what, "a boolean", *this);
}

const std::string& ConfigValue::as_string(const std::string& what) const {
  if (const auto* v = std::get_if<std::string>(&value_)) return *v;
  wrong_type(what, "a string", *this);
}

const ConfigValue::Array& ConfigValue::as_array(const std::string& what) const {
  if (const auto* v = std::get_if<Array>(&value_)) return *v;
  wrong_type(what, "an array", *this);
}

ConfigFile ConfigFile::parse(std::istream& in) {
  ConfigFile cfg;
  std::string raw;
  std::string section;
  long line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto text = trim(strip_comment(raw));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ParseError("malformed section header", line);
      section = trim(std::string_view(text).substr(1, text.size() - 2));
      if (!valid_name(section)) throw ParseError("invalid section name '" + section + "'", line);
      cfg.sections_[section];
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line);
    const auto key = trim(std::string_view(text).substr(0, eq));
    if (!valid_name(key)) throw ParseError("invalid key '" + key + "'", line);
    auto& entries = cfg.sections_[section];
    if (entries.contains(key)) throw ParseError("duplicate key '" + key + "'", line);
    entries.emplace(key, parse_value(trim(std::string_view(text).substr(eq + 1)), line));
  }
  return cfg;
}

ConfigFile ConfigFile::parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path.string());
  return parse(in);
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  auto it = sections_.find(section);
  return it != sections_.end() && it->second.contains(key);
}

bool ConfigFile::has_section(const std::string& section) const { return sections_.contains(section); }

const ConfigValue* ConfigFile::find(const std::string& section, const std::string& key) {
  auto it = sections_.find(section);
  if (it == sections_.end()) return nullptr;
  auto kv = it->second.find(key);
  if (kv == it->second.end()) return nullptr;
  used_.insert({section, key});
  return &kv->second;
}

namespace {
std::string where(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}
}  // namespace

std::int64_t ConfigFile::get_int(const std::string& section, const std::string& key, std::int64_t fallback) {
  const auto* v = find(section, key);
  return v ? v->as_int(where(section, key)) : fallback;
}

double ConfigFile::get_double(const std::string& section, const std::string& key, double fallback) {
  const auto* v = find(section, key);
  return v ? v->as_double(where(section, key)) : fallback;
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key, bool fallback) {
  const auto* v = find(section, key);
  return v ? v->as_bool(where(section, key)) : fallback;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key, const std::string& fallback) {
  const auto* v = find(section, key);
  return v ? v->as_string(where(section, key)) : fallback;
}

std::vector<std::int64_t> ConfigFile::get_int_list(const std::string& section, const std::string& key,
                                                   const std::vector<std::int64_t>& fallback) {
  const auto* v = find(section, key);
  if (!v) return fallback;
  std::vector<std::int64_t> out;
  for (const auto& item : v->as_array(where(section, key))) out.push_back(item.as_int(where(section, key)));
  return out;
}

std::vector<double> ConfigFile::get_double_list(const std::string& section, const std::string& key,
                                                const std::vector<double>& fallback) {
  const auto* v = find(section, key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : v->as_array(where(section, key))) out.push_back(item.as_double(where(section, key)));
  return out;
}

std::vector<std::string> ConfigFile::get_string_list(const std::string& section, const std::string& key,
                                                     const std::vector<std::string>& fallback) {
  const auto* v = find(section, key);
  if (!v) return fallback;
  std::vector<std::string> out;
  for (const auto& item : v->as_array(where(section, key))) out.push_back(item.as_string(where(section, key)));
  return out;
}

void ConfigFile::check_all_used() const {
  for (const auto& [section, entries] : sections_) {
    for (const auto& [key, value] : entries) {
      if (!used_.contains({section, key})) {
        throw ConfigError("unknown config key '" + where(section, key) + "' (line " + std::to_string(value.line()) +
                          ")");
      }
    }
  }
}

std::string format_value(std::int64_t v) { return std::to_string(v); }

std::string format_value(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, p);
  // Keep reals distinguishable from integers.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string format_value(bool v) { return v ? "true" : "false"; }

std::string format_value(const std::string& v) {
  std::string out = "\"";
  for (char c : v) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

namespace {
template <typename T>
std::string format_list(const std::vector<T>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_value(v[i]);
  return out + "]";
}
}  // namespace

std::string format_value(const std::vector<std::int64_t>& v) { return format_list(v); }
std::string format_value(const std::vector<double>& v) { return format_list(v); }
std::string format_value(const std::vector<std::string>& v) { return format_list(v); }

}  // namespace daf::cli
