#pragma once

#include <string>
#include <vector>

namespace comg {

// Command-line entry point (subcommands: generate-corpus, train, generate,
// evaluate, ablate). args excludes the program name. Returns the process
// exit code; failures print a one-line diagnostic to stderr.
int run_cli(const std::vector<std::string>& args);

}  // namespace comg
