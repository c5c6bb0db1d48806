#pragma once

#include <stdexcept>
#include <string>

namespace fesrl {

// Domain errors map to CLI exit code 1, IoError to exit code 2.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class UnreachableError : public Error {
 public:
  explicit UnreachableError(double crank_angle)
      : Error("Unreachable",
              "pedal unreachable at crank angle " + std::to_string(crank_angle) + " rad"),
        crank_angle_(crank_angle) {}
  double crank_angle() const noexcept { return crank_angle_; }

 private:
  double crank_angle_;
};

class NonPositiveParameterError : public Error {
 public:
  explicit NonPositiveParameterError(std::string name)
      : Error("NonPositiveParameter", "parameter must be positive: " + name), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

struct NonFiniteStateError : Error {
  explicit NonFiniteStateError(const std::string& what) : Error("NonFiniteState", what) {}
};

struct ShapeMismatchError : Error {
  explicit ShapeMismatchError(const std::string& what) : Error("ShapeMismatch", what) {}
};

struct InsufficientDataError : Error {
  explicit InsufficientDataError(const std::string& what) : Error("InsufficientData", what) {}
};

struct InvalidArgumentError : Error {
  explicit InvalidArgumentError(const std::string& what) : Error("InvalidArgument", what) {}
};

struct DegenerateIntervalError : Error {
  explicit DegenerateIntervalError(const std::string& what) : Error("DegenerateInterval", what) {}
};

struct NonConvergentPrevActionError : Error {
  explicit NonConvergentPrevActionError(const std::string& what)
      : Error("NonConvergentPrevAction", what) {}
};

struct InconsistentConfigError : Error {
  explicit InconsistentConfigError(const std::string& what) : Error("InconsistentConfig", what) {}
};

struct MuscleSetMismatchError : Error {
  explicit MuscleSetMismatchError(const std::string& what) : Error("MuscleSetMismatch", what) {}
};

/// File-system and parse failures.
struct IoError : Error {
  explicit IoError(const std::string& what) : Error("IoError", what) {}
};

}  // namespace fesrl
