#include "sbnn/errors.hpp"

namespace sbnn {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidSign: return "InvalidSign";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateLfsrState: return "DegenerateLfsrState";
    case ErrorCode::InvalidPixel: return "InvalidPixel";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DegenerateBatchNorm: return "DegenerateBatchNorm";
    case ErrorCode::NonFiniteWeight: return "NonFiniteWeight";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::LayerTooWide: return "LayerTooWide";
    case ErrorCode::GridCapacityExceeded: return "GridCapacityExceeded";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::TruncatedError: return "TruncatedError";
    case ErrorCode::LabelMismatch: return "LabelMismatch";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChecksumError: return "ChecksumError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace sbnn
