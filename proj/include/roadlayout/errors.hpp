#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace roadlayout {

// Base for every error the library raises on bad input data. Programming
// errors (broken invariants inside the library) surface as std::logic_error.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Structured parse failure. line/column are 1-based; 0 means "not applicable".
class ParseError : public DataError {
 public:
  ParseError(std::string message, std::size_t line = 0, std::size_t column = 0);

  const std::string& detail() const { return detail_; }
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::string detail_;
  std::size_t line_;
  std::size_t column_;
};

class GeometryError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace roadlayout
