#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace depthwise {

/// Base class for every error raised by the harness.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A required input is in the wrong state for the operation (wrong depth, missing context, ...).
class PreconditionError : public Error {
public:
  using Error::Error;
};

/// Lookup of an id that does not exist.
class LookupError : public Error {
public:
  using Error::Error;
};

/// Input outside the mathematical domain of an operation.
class DomainError : public Error {
public:
  using Error::Error;
};

/// Inconsistent or malformed data (dimension mismatch, missing prior prediction, ...).
class DataError : public Error {
public:
  using Error::Error;
};

class ConfigurationError : public Error {
public:
  using Error::Error;
};

/// Model output that could not be parsed into the expected shape.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::string raw_output)
      : Error(what), raw_(std::move(raw_output)) {}

  const std::string& raw_output() const noexcept { return raw_; }

private:
  std::string raw_;
};

class GenerationError : public Error {
public:
  using Error::Error;
};

class AugmentationError : public Error {
public:
  using Error::Error;
};

/// Scores or responses missing for ids the computation needs.
class CoverageError : public Error {
public:
  CoverageError(const std::string& what, std::vector<std::string> missing_ids)
      : Error(what + format_ids(missing_ids)), missing_(std::move(missing_ids)) {}

  const std::vector<std::string>& missing_ids() const noexcept { return missing_; }

private:
  static std::string format_ids(const std::vector<std::string>& ids) {
    std::string out = " (missing: ";
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i > 0) out += ", ";
      if (i == 20) {
        out += "... " + std::to_string(ids.size() - 20) + " more";
        break;
      }
      out += ids[i];
    }
    return out + ")";
  }

  std::vector<std::string> missing_;
};

class AuthorizationError : public Error {
public:
  using Error::Error;
};

class ValidationError : public Error {
public:
  using Error::Error;
};

}  // namespace depthwise
