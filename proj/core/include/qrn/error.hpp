#pragma once

#include <stdexcept>
#include <string>

namespace qrn {

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operand dimensions incompatible with an operation.
struct ShapeError : Error {
  using Error::Error;
};

/// Value outside an operation's mathematical domain (negative log input,
/// gate value outside [0, 1], non-finite where finite is required).
struct DomainError : Error {
  using Error::Error;
};

/// API misuse: backward on a non-scalar, reset gate requested while
/// disabled, decoding with an untrained decoder.
struct ContractError : Error {
  using Error::Error;
};

/// Two evaluations of the same closure produced different values.
struct DeterminismError : ContractError {
  using ContractError::ContractError;
};

/// Bad configuration key or value.
struct ConfigError : Error {
  using Error::Error;
};

/// Malformed or empty caller-supplied data.
struct InputError : Error {
  using Error::Error;
};

/// Malformed dataset line. Carries the 1-based line number in the message.
struct ParseError : InputError {
  ParseError(const std::string& what, std::size_t line)
      : InputError("line " + std::to_string(line) + ": " + what), line_number(line) {}
  std::size_t line_number;
};

struct IoError : Error {
  using Error::Error;
};

/// A numeric self-check failed: gradient mismatch, scan disagreement.
struct NumericCheckError : Error {
  using Error::Error;
};

}  // namespace qrn
