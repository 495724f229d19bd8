#pragma once

#include <stdexcept>
#include <string>

namespace tripdiff {

// Error classes map one-to-one onto CLI exit codes and C API status codes.
enum class ErrorKind {
  Usage = 2,
  Data = 3,
  Numerical = 4,
  Degenerate = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class BalanceError : public DataError {
 public:
  BalanceError(const std::string& unit_id, const std::string& what)
      : DataError(what), unit_id_(unit_id) {}
  const std::string& unit_id() const noexcept { return unit_id_; }

 private:
  std::string unit_id_;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t row, const std::string& what)
      : DataError(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::Numerical, what) {}
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(double gradient_norm, const std::string& what)
      : NumericalError(what), gradient_norm_(gradient_norm) {}
  double gradient_norm() const noexcept { return gradient_norm_; }

 private:
  double gradient_norm_;
};

class DegenerateDesignError : public Error {
 public:
  explicit DegenerateDesignError(const std::string& what)
      : Error(ErrorKind::Degenerate, what) {}
};

// Overlap violation: some fitted denominator probability fell below the trim
// threshold.
class TrimError : public DegenerateDesignError {
 public:
  TrimError(std::size_t count, const std::string& what)
      : DegenerateDesignError(what), count_(count) {}
  std::size_t count() const noexcept { return count_; }

 private:
  std::size_t count_;
};

}  // namespace tripdiff
