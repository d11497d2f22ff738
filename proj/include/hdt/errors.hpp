#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hdt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix dimensions do not match what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite input or an argument outside its mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A precondition on the kind of object was violated (e.g. a vector-valued
/// network passed where a scalar Hamiltonian is required).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Integration produced non-finite values.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::ptrdiff_t step)
      : Error(what), step_(step) {}

  /// Index of the integration step at which the blow-up was detected, or -1.
  std::ptrdiff_t step() const noexcept { return step_; }

 private:
  std::ptrdiff_t step_;
};

/// Malformed text input. `line()` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that does not satisfy the expected schema.
class SchemaError : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace hdt
