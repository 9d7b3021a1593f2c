#pragma once

#include <iosfwd>

namespace pim::cli {

/// Runs one subcommand. Returns 0 on success, 1 on runtime failure and 2 on
/// a command-line error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pim::cli
