#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace garkopt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value lies outside the domain of a map (e.g. beta >= 1).
class DomainError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// The discrete trajectory left the region where it is defined: a
/// non-positive radicand under the square root, or a non-finite value.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class NonFiniteGradient : public DivergenceError {
 public:
  using DivergenceError::DivergenceError;
};

class InvalidTableau : public Error {
 public:
  explicit InvalidTableau(std::vector<std::string> violations)
      : Error(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid tableau";
    for (const auto& s : v) {
      out += "\n  ";
      out += s;
    }
    return out;
  }

  std::vector<std::string> violations_;
};

class UnknownTableau : public Error {
 public:
  explicit UnknownTableau(const std::string& name) : Error("unknown tableau: " + name) {}
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class AxisError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what, std::size_t line = 0)
      : Error(format(key, what, line)), key_(std::move(key)), line_(line) {}

  const std::string& key() const noexcept { return key_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& key, const std::string& what, std::size_t line) {
    std::string out = "config error";
    if (line != 0) out += " (line " + std::to_string(line) + ")";
    if (!key.empty()) out += " [" + key + "]";
    return out + ": " + what;
  }

  std::string key_;
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace garkopt
