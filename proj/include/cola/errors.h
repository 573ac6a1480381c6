#pragma once

#include <stdexcept>
#include <string>

namespace cola {

// Malformed binary file (features, checkpoints). Messages name the byte offset.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text input (manifest, ground truth, prediction files).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + " line " + std::to_string(line) + ": " + what),
        line_(line) {}
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

// Invalid configuration value or unknown configuration key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A loss or gradient became non-finite.
class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A zero-norm vector was handed to a unit-sphere projection.
class DegenerateVectorError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace cola
