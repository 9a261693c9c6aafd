#include "acp/error.hpp"

namespace acp {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::UnknownArchitecture: return "UnknownArchitecture";
    case ErrorKind::StructureMismatch: return "StructureMismatch";
    case ErrorKind::ChannelOutOfRange: return "ChannelOutOfRange";
    case ErrorKind::Io: return "IoError";
    case ErrorKind::Format: return "FormatError";
    case ErrorKind::Truncated: return "TruncatedError";
    case ErrorKind::Data: return "DataError";
    case ErrorKind::ZeroNormChannel: return "ZeroNormChannel";
    case ErrorKind::MissingLayer: return "MissingLayer";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EvalTimeout: return "EvalTimeout";
    case ErrorKind::Protocol: return "ProtocolError";
    case ErrorKind::EvaluatorCrashed: return "EvaluatorCrashed";
    case ErrorKind::EvaluatorFailed: return "EvaluatorFailed";
    case ErrorKind::DegenerateStructure: return "DegenerateStructure";
    case ErrorKind::TrainingDiverged: return "TrainingDiverged";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
  }
  return "UnknownError";
}

}  // namespace acp
