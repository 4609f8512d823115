#pragma once

#include <stdexcept>
#include <string>

namespace laood {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dimension disagreement between arguments.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable file content. `field()` names the offending field.
class FormatError : public Error {
 public:
  FormatError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace laood
