#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace corocchio {

/// Root of every error raised by the library. Callers that only need to
/// report a failure can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  DimensionError(std::size_t expected, std::size_t actual)
      : Error("dimension mismatch: expected " + std::to_string(expected) + ", got " +
              std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

/// Raised while reading any on-disk format. `location` is the 1-based record
/// (embedding files) or line number (line-oriented text files); 0 means the
/// problem is not tied to a single record.
class IngestError : public Error {
 public:
  IngestError(std::size_t location, const std::string& what)
      : Error(location == 0 ? what : "record " + std::to_string(location) + ": " + what),
        location_(location) {}

  std::size_t location() const noexcept { return location_; }

 private:
  std::size_t location_;
};

class EmptyStoreError : public Error {
 public:
  using Error::Error;
};

/// Argument outside a function's mathematical domain (rank < 1, grade > 3, NaN, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NoFeedbackError : public Error {
 public:
  using Error::Error;
};

class MissingEmbeddingError : public Error {
 public:
  explicit MissingEmbeddingError(const std::string& id)
      : Error("no embedding for id '" + id + "'"), id_(id) {}

  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class StatError : public Error {
 public:
  using Error::Error;
};

}  // namespace corocchio
