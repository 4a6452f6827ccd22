#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace daf::cli {

/// Flat sectioned key-value configuration:
///
///   # comment
///   [train]
///   lambda = 1.0
///   batch_size = 64
///   strategy = "full"
///   adversarial = true
///   kernel_sizes = [3, 5]
///
/// Values are integers, reals, booleans, double-quoted strings or one-level
/// arrays of those. Every key read through the typed getters is marked as
/// used; check_all_used() then rejects anything left over.
class ConfigValue {
 public:
  using Array = std::vector<ConfigValue>;
  using Storage = std::variant<std::int64_t, double, bool, std::string, Array>;

  ConfigValue() = default;
  ConfigValue(Storage v, long line) : value_(std::move(v)), line_(line) {}

  std::int64_t as_int(const std::string& what) const;
  // Integers widen to reals.
  double as_double(const std::string& what) const;
  bool as_bool(const std::string& what) const;
  const std::string& as_string(const std::string& what) const;
  const Array& as_array(const std::string& what) const;

  long line() const noexcept { return line_; }
  const Storage& storage() const noexcept { return value_; }

 private:
  Storage value_;
  long line_ = 0;
};

class ConfigFile {
 public:
  static ConfigFile parse(std::istream& in);
  static ConfigFile parse_string(const std::string& text);
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  bool has_section(const std::string& section) const;

  // Typed reads; `fallback` is returned when the key is absent.
  std::int64_t get_int(const std::string& section, const std::string& key, std::int64_t fallback);
  double get_double(const std::string& section, const std::string& key, double fallback);
  bool get_bool(const std::string& section, const std::string& key, bool fallback);
  std::string get_string(const std::string& section, const std::string& key, const std::string& fallback);
  std::vector<std::int64_t> get_int_list(const std::string& section, const std::string& key,
                                         const std::vector<std::int64_t>& fallback);
  std::vector<double> get_double_list(const std::string& section, const std::string& key,
                                      const std::vector<double>& fallback);
  std::vector<std::string> get_string_list(const std::string& section, const std::string& key,
                                           const std::vector<std::string>& fallback);

  // Throws ConfigError naming the first key (or section) nothing asked for.
  void check_all_used() const;

 private:
  const ConfigValue* find(const std::string& section, const std::string& key);

  std::map<std::string, std::map<std::string, ConfigValue>> sections_;
  std::set<std::pair<std::string, std::string>> used_;
};

/// Writes values back in the same syntax; reals round-trip exactly.
std::string format_value(std::int64_t v);
std::string format_value(double v);
std::string format_value(bool v);
std::string format_value(const std::string& v);
std::string format_value(const std::vector<std::int64_t>& v);
std::string format_value(const std::vector<double>& v);
std::string format_value(const std::vector<std::string>& v);

}  // namespace daf::cli
