#ifndef TRIAN_ERROR_HPP
#define TRIAN_ERROR_HPP

#include <stdexcept>
#include <string>

namespace trian {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape / dimension mismatches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values (dropout rate, layer count, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input files; messages carry the line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Structurally valid input missing a required field.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Out-of-range index into an embedding table or similar.
class LookupError : public Error {
 public:
  using Error::Error;
};

// Caller violated an operation precondition (empty group, label not in {0,1}, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Checkpoint load/verify failures and ensemble config mismatches.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace trian

#endif  // TRIAN_ERROR_HPP
