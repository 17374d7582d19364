#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sbnn {

enum class ErrorCode {
  InvalidSign,
  DimensionMismatch,
  DegenerateLfsrState,
  InvalidPixel,
  InvalidConfig,
  DegenerateBatchNorm,
  NonFiniteWeight,
  EmptyBatch,
  InvalidLabel,
  NonFiniteGradient,
  TrainingDiverged,
  LayerTooWide,
  GridCapacityExceeded,
  FormatError,
  TruncatedError,
  LabelMismatch,
  VersionMismatch,
  ChecksumError,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so
// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(int epoch, const std::string& what)
      : Error(ErrorCode::TrainingDiverged, what), epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace sbnn
