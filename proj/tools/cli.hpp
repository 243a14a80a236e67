#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stv::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kFormat = 3, kDomain = 4 };

// Runs one command line (without the program name). Normal output goes to
// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stv::cli
