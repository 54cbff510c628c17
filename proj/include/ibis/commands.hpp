#pragma once

#include <iosfwd>

namespace ibis {

/// Exit statuses shared by every subcommand.
enum ExitStatus : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitScorer = 3,
  kExitData = 4,
};

/// Entry point of the `ibis` tool: train-lm, shuffle, beam, latent-eval,
/// constrained, eval and serve. Machine-readable results go to `out`,
/// diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ibis
