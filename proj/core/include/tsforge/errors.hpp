#pragma once

#include <stdexcept>
#include <string>

namespace tsforge {

// Error categories. The CLI maps them onto process exit codes:
// config/usage -> 1, data -> 2, numeric/runtime -> 3.
enum class ErrorKind {
  kConfig,     // invalid configuration value or combination
  kParameter,  // invalid argument to an operation
  kDimension,  // shape mismatch between tensors
  kData,       // malformed dataset, file, or checkpoint
  kMetric,     // invalid input to a similarity metric
  kContract,   // API misuse (non-scalar loss, missing tape, ...)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what) : Error(ErrorKind::kParameter, what) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorKind::kDimension, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class MetricError : public Error {
 public:
  explicit MetricError(const std::string& what) : Error(ErrorKind::kMetric, what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorKind::kContract, what) {}
};

// Checkpoint loading failures keep their cause distinguishable so callers can
// tell a wrong file from a damaged one.
class CheckpointError : public DataError {
 public:
  enum class Cause { kBadMagic, kVersionMismatch, kTruncated, kCorrupt };

  CheckpointError(Cause cause, const std::string& what)
      : DataError(what), cause_(cause) {}
  Cause cause() const noexcept { return cause_; }

 private:
  Cause cause_;
};

}  // namespace tsforge
