#pragma once

#include <stdexcept>
#include <string>

namespace debias_cl {

// Root of everything this library throws. Subclasses map onto CLI exit codes:
// ConfigError -> 2, IoError and FormatError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DegenerateVectorError : public Error {
 public:
  DegenerateVectorError(std::size_t row, double norm)
      : Error("degenerate vector at row " + std::to_string(row) + " (norm " + std::to_string(norm) + ")"),
        row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// On-disk format failures. Each failure class is distinct so callers can
// tell corruption apart from a file written for a different shape.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

class MagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class HeaderMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace debias_cl
