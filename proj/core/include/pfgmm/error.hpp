#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace pfgmm {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// A block that should be positive definite is not (numerically).
class ConditioningError : public Error {
 public:
  ConditioningError(const std::string& what, std::optional<int> group = std::nullopt,
                    double min_eigenvalue = 0.0)
      : Error(what), group_(group), min_eigenvalue_(min_eigenvalue) {}

  std::optional<int> group() const { return group_; }
  double min_eigenvalue() const { return min_eigenvalue_; }

 private:
  std::optional<int> group_;
  double min_eigenvalue_;
};

class InstrumentError : public Error {
 public:
  InstrumentError(const std::string& what, int column) : Error(what), column_(column) {}
  int column() const { return column_; }

 private:
  int column_;
};

class RankDeficiency : public Error {
 public:
  using Error::Error;
};

// Malformed input data. `row` is 1-based and counts the header line.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what, long row = -1) : Error(what), row_(row) {}
  long row() const { return row_; }

 private:
  long row_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace pfgmm
