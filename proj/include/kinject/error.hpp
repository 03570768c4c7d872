#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kinject {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a precondition (shape mismatch, non-scalar root, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Missing or inconsistent configuration, including unbound tape leaves.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// User-supplied value outside its admissible range.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN or infinity.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t node = npos)
      : Error(what), node_(node) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t node() const { return node_; }

 private:
  std::size_t node_;
};

/// A primitive was asked for a derivative rule it does not provide.
class CapabilityError : public Error {
 public:
  CapabilityError(const std::string& primitive)
      : Error("primitive '" + primitive +
              "' has no second-derivative rule"),
        primitive_(primitive) {}

  const std::string& primitive() const { return primitive_; }

 private:
  std::string primitive_;
};

/// Malformed input text. Line and column are 1-based; 0 means unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0,
             std::size_t column = 0)
      : Error(format(what, line, column)), line_(line), column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t line,
                            std::size_t column) {
    if (line == 0) return what;
    std::string out = what + " (line " + std::to_string(line);
    if (column != 0) out += ", column " + std::to_string(column);
    return out + ")";
  }

  std::size_t line_;
  std::size_t column_;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

/// Data does not match the declared schema (unknown label, nominal column).
class SchemaError : public Error {
 public:
  using Error::Error;
};

class DegenerateFeatureError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for the given input, e.g. AUROC with one class.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, const std::string& term, const std::string& detail)
      : Error("training diverged at epoch " + std::to_string(epoch) +
              " in term '" + term + "': " + detail),
        epoch_(epoch),
        term_(term) {}

  int epoch() const { return epoch_; }
  const std::string& term() const { return term_; }

 private:
  int epoch_;
  std::string term_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Invalid command-line usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace kinject
