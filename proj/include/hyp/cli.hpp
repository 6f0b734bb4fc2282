#pragma once

// Command-line front end: train, eval, bench, checkgrad, gen-tree.
//
// Exit codes: 0 success, 1 failed check or usage error, 2 config error,
// 3 data error, 4 numerical failure, 5 timer too coarse for the benchmark.

#include <iosfwd>

namespace hyp {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumerical = 4,
  kExitTimer = 5,
};

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hyp
