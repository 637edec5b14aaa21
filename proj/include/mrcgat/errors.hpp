#pragma once

#include <stdexcept>
#include <string>

namespace mrcgat {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: CSV schema, config keys, model-file shape mismatch.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class RowError : public SchemaError {
 public:
  RowError(std::size_t line, const std::string& what)
      : SchemaError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A class cannot supply the requested number of support subjects.
class SamplingError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class NotSpdError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateEpisodeError : public Error {
 public:
  using Error::Error;
};

class UndefinedAucError : public Error {
 public:
  using Error::Error;
};

}  // namespace mrcgat
