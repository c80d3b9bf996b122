#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace nemo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// Vector or matrix dimensions do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape"; }
};

/// A value became non-finite. Carries the offending element index when known
/// (a parameter index, a bin index, ...).
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what,
                          std::optional<std::size_t> index = std::nullopt)
      : Error(index ? what + " (index " + std::to_string(*index) + ")" : what),
        index_(index) {}
  std::optional<std::size_t> index() const noexcept { return index_; }
  const char* kind() const noexcept override { return "numerical"; }

 private:
  std::optional<std::size_t> index_;
};

/// Invalid hyperparameter or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

/// Bin or element index outside its valid range.
class IndexError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "index"; }
};

/// The data cannot support the requested operation (empty dataset, all
/// outputs equal, ...).
class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data"; }
};

/// Malformed input file. `line` is 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  const char* kind() const noexcept override { return "parse"; }

 private:
  std::size_t line_;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "convergence"; }
};

}  // namespace nemo
