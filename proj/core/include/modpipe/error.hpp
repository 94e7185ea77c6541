#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace modpipe {

// Base of every exception thrown by the library. `kind()` is a stable
// machine-readable tag used by the CLI's one-line error output.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Input that violates a documented contract (unknown category, bad config).
class InputError : public Error {
 public:
  explicit InputError(const std::string& message) : Error("invalid_input", message) {}
};

class MappingError : public Error {
 public:
  MappingError(std::string field, const std::string& message)
      : Error("mapping", message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Malformed line in a line-oriented file. `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error("parse", "line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicateIdError : public Error {
 public:
  explicit DuplicateIdError(const std::string& id)
      : Error("duplicate_id", "duplicate sample id: " + id), id_(id) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& message) : Error("not_found", message) {}
};

class ConsolidationError : public Error {
 public:
  explicit ConsolidationError(const std::string& message) : Error("consolidation", message) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& message) : Error("dimension", message) {}
};

class CheckpointError : public Error {
 public:
  explicit CheckpointError(const std::string& message) : Error("corrupt_checkpoint", message) {}
};

class VersionError : public Error {
 public:
  explicit VersionError(const std::string& message) : Error("version_mismatch", message) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& message) : Error("training", message) {}
};

class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& message) : Error("undefined_metric", message) {}
};

class OracleError : public Error {
 public:
  explicit OracleError(const std::string& message) : Error("oracle", message) {}
};

class StorageError : public Error {
 public:
  explicit StorageError(const std::string& message) : Error("storage", message) {}
};

}  // namespace modpipe
