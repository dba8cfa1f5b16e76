#pragma once

#include "rsbench/error.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace rsbench::cli {

/// Runs the command line; returns the process exit code. Failures print a
/// single `ERROR <code>: <message>` line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 0 on success, 2 for failed numerical checks, 1 for every other error.
int exit_code_for(ErrorCode code) noexcept;

std::string sha256_file(const std::string& path);

}  // namespace rsbench::cli
