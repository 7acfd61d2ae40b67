#pragma once

#include <ostream>

namespace jrl {

// Runs the command line. Returns 0 on success, 1 on a contract or
// validation error and 2 on an I/O error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace jrl
