#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace ctrlid {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// Raised when a state component stops being finite during integration.
class IntegrationDiverged : public Error {
 public:
  IntegrationDiverged(double last_finite_time, const std::string& what)
      : Error(what), last_finite_time_(last_finite_time) {}
  double last_finite_time() const noexcept { return last_finite_time_; }

 private:
  double last_finite_time_;
};

/// Records mixed across anchors, or otherwise violating the restart protocol.
class ProtocolViolation : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class InfeasibleDesign : public Error {
 public:
  using Error::Error;
};

class DegenerateDesign : public Error {
 public:
  using Error::Error;
};

/// Wraps an upstream failure with the stage and experiment that produced it.
class StageError : public Error {
 public:
  StageError(std::string stage, std::optional<int> anchor, std::optional<int> input,
             const std::string& cause);

  const std::string& stage() const noexcept { return stage_; }
  std::optional<int> anchor_index() const noexcept { return anchor_; }
  std::optional<int> input_index() const noexcept { return input_; }
  const std::string& cause() const noexcept { return cause_; }

 private:
  std::string stage_;
  std::optional<int> anchor_;
  std::optional<int> input_;
  std::string cause_;
};

}  // namespace ctrlid
