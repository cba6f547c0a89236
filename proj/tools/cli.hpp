#pragma once

#include <iosfwd>

namespace codefi::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // I/O failure or bench rows out of tolerance
inline constexpr int kExitUsage = 2;
inline constexpr int kExitArbitrage = 3;
inline constexpr int kExitNonConvergence = 4;

/// Entry point of the codefi command line; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace codefi::cli
