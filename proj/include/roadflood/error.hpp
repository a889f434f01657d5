#pragma once

#include <stdexcept>
#include <string>

namespace roadflood {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition violated by a caller-supplied value.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// File missing, unreadable, or unwritable.
class IoError : public Error {
 public:
  using Error::Error;
};

/// File contents do not match the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Failure inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace roadflood
