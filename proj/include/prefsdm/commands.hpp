#pragma once

#include <string>

#include "prefsdm/io.hpp"

namespace prefsdm {

/// Subcommand entry points used by both the CLI binary and the tests.
/// Each takes a flat key=value Config (file values overlaid with CLI
/// flags), writes its outputs under the `out` directory with fixed
/// filenames, and throws Validation/Numerical/IoError on failure.
void cmd_simulate(const Config& cfg);
void cmd_fit(const Config& cfg);
void cmd_predict(const Config& cfg);
void cmd_evaluate(const Config& cfg);

/// Full argv-level CLI: subcommand dispatch, flag parsing, error-to-exit-
/// code mapping (0 ok, 2 validation, 3 numerical, 4 io).
int run_cli(int argc, const char* const* argv);

}  // namespace prefsdm
