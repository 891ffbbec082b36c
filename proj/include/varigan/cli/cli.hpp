#pragma once

#include <string>
#include <vector>

namespace varigan {

/// Parses and runs one command; args exclude the program name. Returns the
/// process exit code (0 only after the run manifest has been written).
int run_cli(std::vector<std::string> args);

}  // namespace varigan
