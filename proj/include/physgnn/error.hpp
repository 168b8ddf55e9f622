#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace physgnn {

// Base for every error this library throws. The CLI maps InputError to exit
// code 2 and NumericalError to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed files, invalid configuration, inconsistent sets.
class InputError : public Error {
 public:
  using Error::Error;
};

class ParseError : public InputError {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : InputError(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class MeshError : public InputError {
 public:
  using InputError::InputError;
};

class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

// Tensor shape incompatibility; the message names the op and both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, solver non-convergence, element inversion.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace physgnn
