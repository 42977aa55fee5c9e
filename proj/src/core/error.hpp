#pragma once

#include <stdexcept>
#include <string>

namespace vfpp {

// Numeric values are mirrored by vfpp_status in the public C header.
enum class ErrorCode : int {
  InvalidArgument = 1,
  PointAtInfinity = 2,
  RankDeficient = 3,
  DimensionMismatch = 4,
  FrameCountMismatch = 5,
  PatternExceedsPlane = 6,
  GridNotFound = 7,
  AmbiguousOrientation = 8,
  CenterMasked = 9,
  DegenerateConfiguration = 10,
  NonConvergence = 11,
  InconsistentPoseCount = 12,
  SingularGeometry = 13,
  EmptyMask = 14,
  DegenerateCorrespondences = 15,
  NoValidModel = 16,
  IoError = 17,
  ConfigError = 18,
  ThresholdExceeded = 19,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vfpp
