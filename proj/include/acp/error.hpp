#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace acp {

/// Every failure the engine can report. The numeric value of each kind is
/// also the process exit code used by the command-line tool, so the order
/// is part of the public interface: append only.
enum class ErrorKind : int {
  Config = 2,
  UnknownArchitecture = 10,
  StructureMismatch = 11,
  ChannelOutOfRange = 12,
  Io = 20,
  Format = 21,
  Truncated = 22,
  Data = 23,
  ZeroNormChannel = 30,
  MissingLayer = 31,
  ShapeMismatch = 32,
  EvalTimeout = 40,
  Protocol = 41,
  EvaluatorCrashed = 42,
  EvaluatorFailed = 43,
  DegenerateStructure = 50,
  TrainingDiverged = 60,
  EmptyDataset = 61,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

}  // namespace acp
