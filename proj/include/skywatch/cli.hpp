#pragma once

#include <iosfwd>

namespace skywatch::cli {

/// Command-line entry point. Returns 0 on success, 1 on runtime failure and 2
/// on usage errors; diagnostics go to `err` prefixed with "error:".
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace skywatch::cli
