#pragma once

#include <iosfwd>

#include "cli/config.hpp"

namespace fermigas::cli {

enum ExitCode : int { kSuccess = 0, kComputationFailure = 1, kConfigFailure = 2 };

/// Runs a validated configuration, writes <out>/<subcommand>.json plus CSV tables and
/// prints a short plain-text report to `log`. Module errors are serialized into the summary.
int run(const RunConfig& config, std::ostream& log);

/// Thread count: the flag if given (> 0), else FERMIGAS_THREADS, else 1.
int resolve_threads(int flag);

}  // namespace fermigas::cli
