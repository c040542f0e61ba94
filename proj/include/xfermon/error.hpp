#pragma once

#include <stdexcept>
#include <string>

namespace xfermon {

// Precondition violated by the caller (bad probability, empty class, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input data is malformed or inconsistent with its schema.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// I/O or peer failure at run time (socket errors, unreachable collector).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace xfermon
