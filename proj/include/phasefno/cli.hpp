#pragma once

#include <ostream>
#include <string>

namespace phasefno::cli {

enum ExitCode { kSuccess = 0, kUsageError = 1, kRuntimeError = 2 };

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootVariable = "PHASEFNO_OUTPUT_ROOT";

/// Runs `phasefno <command> ...` and returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// SHA-1 of "blob <size>\0<bytes>", as git hashes file contents.
std::string git_blob_hash(const std::string& bytes);

}  // namespace phasefno::cli
