#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mrdl {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration, unknown job ids, bad hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Data that should be internally consistent is not (shuffle corruption,
/// image/label count mismatch, dimension chain broken).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// A requested count or index is out of range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data. `offset()` is the byte position where parsing
/// stopped making sense.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class TruncationError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// A map or reduce task failed; the job was aborted.
class JobError : public Error {
 public:
  JobError(const std::string& what, std::size_t record_index)
      : Error(what), record_index_(record_index) {}

  /// Index of the failing input record (map phase) or key (reduce phase).
  std::size_t record_index() const noexcept { return record_index_; }

 private:
  std::size_t record_index_;
};

}  // namespace mrdl
