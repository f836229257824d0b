#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace framewise::cli {

enum ExitCode : int { ok = 0, usage = 1, runtime = 2, network = 3 };

/// Runs one command line (without the program name). Results go to `out`,
/// diagnostics to `err`.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace framewise::cli
