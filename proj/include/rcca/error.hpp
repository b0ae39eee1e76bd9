#pragma once

#include <stdexcept>
#include <string>

namespace rcca {

/// Precondition violation on caller-supplied data or parameters.
class InvalidInput : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Reading or writing a file failed.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// An iterative solver stopped without meeting its certificate.
class ConvergenceFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace rcca
