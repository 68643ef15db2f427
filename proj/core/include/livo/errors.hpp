#pragma once

#include <stdexcept>
#include <string>

namespace livo {

/// Base class for all recoverable estimator errors. Invalid arguments use
/// std::invalid_argument directly.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UndistortionError : public Error {
 public:
  using Error::Error;
};

class EmptyMapError : public Error {
 public:
  using Error::Error;
};

class NotReadyError : public Error {
 public:
  using Error::Error;
};

class OutOfBoundsError : public Error {
 public:
  using Error::Error;
};

class BehindCameraError : public Error {
 public:
  using Error::Error;
};

class InitializationError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Unknown key or out-of-range value in a configuration file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the offending file and 1-based line (0 when
/// the problem is not tied to a line).
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : Error(file + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

}  // namespace livo
