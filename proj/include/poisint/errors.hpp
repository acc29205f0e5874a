#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace poisint {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input from the caller: malformed expressions, invalid meshes, flags.
class UserError : public Error {
 public:
  using Error::Error;
};

// The numerics refused or failed: stability, quadrature, mesh too short.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public UserError {
 public:
  using UserError::UserError;
};

class SyntaxError : public UserError {
 public:
  SyntaxError(std::size_t offset, const std::string& what)
      : UserError("syntax error at offset " + std::to_string(offset) + ": " + what),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class UnknownIdentifier : public UserError {
 public:
  UnknownIdentifier(std::size_t offset, std::string name)
      : UserError("unknown identifier '" + name + "' at offset " + std::to_string(offset)),
        offset_(offset),
        name_(std::move(name)) {}
  std::size_t offset() const noexcept { return offset_; }
  const std::string& name() const noexcept { return name_; }

 private:
  std::size_t offset_;
  std::string name_;
};

// Evaluation left the reals. `subexpression()` is the printed offending node.
class DomainError : public UserError {
 public:
  DomainError(std::string subexpression, const std::string& why)
      : UserError("domain error in '" + subexpression + "': " + why),
        subexpression_(std::move(subexpression)) {}
  const std::string& subexpression() const noexcept { return subexpression_; }

 private:
  std::string subexpression_;
};

class MeshMismatch : public UserError {
 public:
  using UserError::UserError;
};

class Delta1TooSmall : public UserError {
 public:
  using UserError::UserError;
};

class NonFiniteDensity : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SegmentationFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class StabilityViolation : public NumericalError {
 public:
  explicit StabilityViolation(double margin)
      : NumericalError("stability violation: 1 - h*n* = " + std::to_string(margin) +
                       " (need h*n* < 1)"),
        margin_(margin) {}
  double margin() const noexcept { return margin_; }

 private:
  double margin_;
};

class MeshTooShort : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class QuadratureFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InvariantViolation : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace poisint
