#pragma once

#include <stdexcept>
#include <string>

namespace qksdp {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
  ParseError(const std::string &what, int line, int column)
      : Error(what + " (line " + std::to_string(line) + ", column " +
              std::to_string(column) + ")"),
        line_(line), column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

private:
  int line_;
  int column_;
};

class GeneratorError : public Error {
public:
  using Error::Error;
};

class DimensionMismatch : public Error {
public:
  using Error::Error;
};

/// The arrow-structured normal equations of the tangent projection lost their
/// pivot: the point is numerically non-regular.
class SingularProjection : public Error {
public:
  using Error::Error;
};

class RetractionDiverged : public Error {
public:
  using Error::Error;
};

class SingularNormalEquations : public Error {
public:
  using Error::Error;
};

class StepFailed : public Error {
public:
  using Error::Error;
};

class TooLarge : public Error {
public:
  using Error::Error;
};

} // namespace qksdp
