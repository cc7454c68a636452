#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qamatch {

// Runs one command line (args exclude the program name). Returns the exit
// code: 0 success, 1 bad input or usage, 2 internal failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace qamatch
