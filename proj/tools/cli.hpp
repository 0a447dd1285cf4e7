#pragma once

#include <string>
#include <vector>

namespace ircr::cli {

/// Entry point for the `ircr` tool. Returns the process exit code; errors are
/// reported on stderr and leave no partial outputs behind.
int run(int argc, const char* const* argv);

/// Same, with argv[0] supplied as args[0].
int run(const std::vector<std::string>& args);

}  // namespace ircr::cli
