#pragma once

#include <iosfwd>

namespace modpipe::tools {

// Runs the modpipe command line. Exit status: 0 success, 1 runtime error
// (one JSON line {"error", "message"} on `err`), 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace modpipe::tools
