#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mvmom {

enum class ErrorCode {
  kInvalidArgument,
  kParseError,
  kIoFailure,
  kInvalidParams,
  kDimensionMismatch,
  kEmptyBatch,
  kRankDeficient,
  kSingularCore,
  kDegenerateSpectrum,
  kAmbiguousMatching,
  kMissingFourthMoments,
  kZeroColumn,
  kDegenerateChain,
  kConditionViolated,
};

std::string_view error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, std::string(error_name(code)) + ": " + what);
}

}  // namespace mvmom
