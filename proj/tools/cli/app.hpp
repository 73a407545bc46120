#pragma once

#include <iosfwd>

namespace axcv::cli {

/// Parses arguments, runs the subcommand and writes its report. Returns the
/// process exit code; nothing is written when configuration fails.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace axcv::cli
