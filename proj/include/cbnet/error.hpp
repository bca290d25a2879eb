#pragma once

#include <stdexcept>
#include <string>

namespace cbnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// A scenario, simulation or model configuration that can never run.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Malformed input file. The message names the offending row and column.
class ParseError : public Error {
public:
  ParseError(const std::string &source, std::size_t row, const std::string &column,
             const std::string &what)
      : Error(source + ": row " + std::to_string(row) + ", column '" + column + "': " + what),
        row_(row), column_(column) {}
  explicit ParseError(const std::string &what) : Error(what) {}

  std::size_t row() const { return row_; }
  const std::string &column() const { return column_; }

private:
  std::size_t row_ = 0;
  std::string column_;
};

class TrainingError : public Error {
public:
  using Error::Error;
};

} // namespace cbnet
