#pragma once

#include <iosfwd>

namespace sparsesense {

/// Runs the command-line interface. Returns the process exit code:
/// 0 success, 1 usage or precondition failure, 2 I/O, 3 dimension, 4 convergence.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sparsesense
