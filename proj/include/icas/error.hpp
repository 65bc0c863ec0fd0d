#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace icas {

/// Base of every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration, bad flags, or a precondition the caller violated.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input line. Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that breaks a data invariant. Names the offending field.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, std::string detail)
      : Error(field + ": " + detail), field_(std::move(field)), detail_(std::move(detail)) {}
  const std::string& field() const noexcept { return field_; }
  const std::string& detail() const noexcept { return detail_; }

  ValidationError at_line(std::size_t line) const {
    return ValidationError(field_, detail_ + " (line " + std::to_string(line) + ")");
  }

 private:
  std::string field_;
  std::string detail_;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace icas
