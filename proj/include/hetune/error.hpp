#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hetune {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A space definition or a configuration violates its declared domain.
class SpaceError : public Error {
 public:
  using Error::Error;
};

/// A categorical label has no integer code in its parameter.
class EncodingError : public Error {
 public:
  using Error::Error;
};

/// No free parameter has more than one admissible value.
class NoNeighborError : public Error {
 public:
  using Error::Error;
};

/// A raw measurement is internally inconsistent (e.g. energy with zero time).
class InvalidMeasurement : public Error {
 public:
  using Error::Error;
};

/// Energy efficiency is undefined because the total power is zero.
class UndefinedEfficiency : public Error {
 public:
  using Error::Error;
};

/// R^2 is undefined because the targets have zero variance.
class UndefinedScore : public Error {
 public:
  using Error::Error;
};

/// Bad arguments to a fitting or validation routine.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Feature arity or names do not match what a model was trained on.
class FeatureMismatch : public ModelError {
 public:
  using ModelError::ModelError;
};

/// An evaluator could not produce a value for a configuration. `output()`
/// holds whatever an external program printed, empty otherwise.
class EvaluationError : public Error {
 public:
  explicit EvaluationError(const std::string& what, std::string output = {})
      : Error(what), output_(std::move(output)) {}

  const std::string& output() const noexcept { return output_; }

 private:
  std::string output_;
};

class NotRecorded : public EvaluationError {
 public:
  using EvaluationError::EvaluationError;
};

class AmbiguousRecord : public EvaluationError {
 public:
  using EvaluationError::EvaluationError;
};

/// External command failed, timed out or printed nothing parsable.
class ExecutionError : public EvaluationError {
 public:
  ExecutionError(const std::string& what, std::string output) : EvaluationError(what, std::move(output)) {}
};

/// Malformed input file. `line()` is 1-based, 0 when not line oriented.
class DataFormatError : public Error {
 public:
  DataFormatError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace hetune
