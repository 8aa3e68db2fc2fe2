#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ctrlsum {

/// Base class for every contract violation raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A corpus or artifact record that does not match its documented schema.
class SchemaError : public Error {
 public:
  SchemaError(std::size_t line, std::string field, const std::string& message)
      : Error("line " + std::to_string(line) + ": field '" + field + "': " + message),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

/// An upstream artifact (checkpoint, oracle file, ...) a stage depends on is absent.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctrlsum
