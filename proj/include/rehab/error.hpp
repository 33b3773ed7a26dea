#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rehab {

enum class ErrorCode {
  DegenerateSegment,
  CollinearSamples,
  DuplicateCell,
  PitchTooSmall,
  InvalidDesignatedCell,
  InvalidCell,
  EmptyCandidateSet,
  InvalidConfig,
  InvalidPhase,
  LayoutMismatch,
  MalformedFrame,
  EndOfStream,
  OutOfOrderRecord,
  StorageFailure,
  MissingHeader,
  VersionUnsupported,
  DuplicateNickname,
  InvalidNickname,
  UnknownNickname,
  UnknownSession,
  InvalidMergedConfig,
  InvalidSource,
};

std::string_view to_string(ErrorCode code);

// All domain failures surface as this exception; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rehab
