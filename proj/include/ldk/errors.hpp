#pragma once

#include <stdexcept>
#include <string>

namespace ldk {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument or field violates a type invariant or an operation precondition.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A file exists but its contents are malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// A point cannot be projected (behind the camera).
class ProjectionError : public Error {
 public:
  using Error::Error;
};

class RegistrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace ldk
