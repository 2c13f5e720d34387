#pragma once

#include <stdexcept>
#include <string>

namespace overscale {

/// Input file does not conform to its documented schema. The CLI maps this
/// to exit code 2.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace overscale
