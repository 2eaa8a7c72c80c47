#pragma once

#include <stdexcept>
#include <string>

namespace sparsesense {

// Failure category; the CLI maps each to a distinct exit code.
enum class ErrorKind { precondition, io, dimension, convergence };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what)
      : Error(ErrorKind::precondition, what) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what)
      : Error(ErrorKind::dimension, what) {}
};

class ConvergenceError : public Error {
 public:
  explicit ConvergenceError(const std::string& what)
      : Error(ErrorKind::convergence, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

// Distinct PGM failure modes.
class PgmHeaderError : public IoError {
 public:
  using IoError::IoError;
};
class PgmTruncatedError : public IoError {
 public:
  using IoError::IoError;
};
class PgmFormatError : public IoError {
 public:
  using IoError::IoError;
};

// Requested rank exceeds the numerical rank of the data.
class RankError : public DimensionError {
 public:
  RankError(const std::string& what, int usable_rank)
      : DimensionError(what), usable_rank_(usable_rank) {}
  int usable_rank() const noexcept { return usable_rank_; }

 private:
  int usable_rank_;
};

}  // namespace sparsesense
