#pragma once

#include <stdexcept>
#include <string>

namespace daf {

// Shape disagreement between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid user-supplied configuration (bounds, sizes, strategies).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A caller broke a documented precondition.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct InputTooShortError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct EmptyDatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A required input file is missing or unreadable.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& what, long line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

struct UndefinedMetricError : std::domain_error {
  using std::domain_error::domain_error;
};

// Persisted state does not match the configuration it is loaded into.
struct StateMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace daf
