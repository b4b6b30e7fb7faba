#pragma once

#include <stdexcept>
#include <string>

namespace mcfuse {

// Base class for all toolkit errors. `kind()` is a stable machine-readable
// tag; the CLI prints `error: <kind>: <message>` on one line and exits
// nonzero.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error("shape", msg) {}
};

struct DegenerateAlignmentError : Error {
  explicit DegenerateAlignmentError(const std::string& msg)
      : Error("alignment-degenerate", msg) {}
};

struct InsufficientLengthError : Error {
  explicit InsufficientLengthError(const std::string& msg)
      : Error("insufficient-length", msg) {}
};

struct TrainingDivergedError : Error {
  explicit TrainingDivergedError(const std::string& msg)
      : Error("training-diverged", msg) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string& msg) : Error("numerical", msg) {}
};

struct CheckFailedError : Error {
  explicit CheckFailedError(const std::string& msg)
      : Error("check-failed", msg) {}
};

// Carries the 1-based line number of the offending input line.
struct ParseError : Error {
  ParseError(const std::string& file, int line, const std::string& msg)
      : Error("parse",
              file + ":" + std::to_string(line) + ": " + msg),
        line_number(line) {}
  int line_number;
};

struct PrerequisiteError : Error {
  explicit PrerequisiteError(const std::string& msg)
      : Error("prerequisite", msg) {}
};

struct SchemaError : Error {
  explicit SchemaError(const std::string& msg) : Error("schema", msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io", msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

}  // namespace mcfuse
