#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ocrcap::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsage = 2,
  kDataError = 3,
  kNumerical = 4,
};

// Runs one `ocrcap` invocation; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ocrcap::cli
