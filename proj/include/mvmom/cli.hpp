#pragma once

#include <mvmom/error.hpp>

#include <iosfwd>
#include <vector>

namespace mvmom::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

/// Process exit code for an error; unique per code. InvalidArgument shares
/// the usage code.
int exit_code(ErrorCode code);

/// Every ErrorCode, in declaration order.
const std::vector<ErrorCode>& all_error_codes();

/// Runs the tool. Never throws; failures are reported on `err` and mapped
/// to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mvmom::cli
