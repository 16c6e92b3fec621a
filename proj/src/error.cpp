#include <mvmom/error.hpp>

namespace mvmom {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kInvalidParams: return "InvalidParams";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kSingularCore: return "SingularCore";
    case ErrorCode::kDegenerateSpectrum: return "DegenerateSpectrum";
    case ErrorCode::kAmbiguousMatching: return "AmbiguousMatching";
    case ErrorCode::kMissingFourthMoments: return "MissingFourthMoments";
    case ErrorCode::kZeroColumn: return "ZeroColumn";
    case ErrorCode::kDegenerateChain: return "DegenerateChain";
    case ErrorCode::kConditionViolated: return "ConditionViolated";
  }
  return "Unknown";
}

}  // namespace mvmom
