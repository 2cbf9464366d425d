#include "fetalsep/error.hpp"

namespace fetalsep {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::InvalidBand: return "InvalidBand";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateSignal: return "DegenerateSignal";
    case ErrorCode::ZeroNoise: return "ZeroNoise";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::FsMismatch: return "FsMismatch";
    case ErrorCode::ConstantReference: return "ConstantReference";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::ZeroEnergy: return "ZeroEnergy";
    case ErrorCode::AllTied: return "AllTied";
  }
  return "Unknown";
}

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadConfig:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::FsMismatch:
    case ErrorCode::VersionMismatch:
      return 2;
    case ErrorCode::DegenerateSignal:
    case ErrorCode::ZeroNoise:
    case ErrorCode::ConstantReference:
    case ErrorCode::DegenerateVariance:
    case ErrorCode::ZeroEnergy:
    case ErrorCode::AllTied:
      return 4;
    default:
      return 3;
  }
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace fetalsep
