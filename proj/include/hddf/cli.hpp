#pragma once

#include <string>
#include <vector>

namespace hddf {

// Runs the simulator command line: parses flags, executes the requested
// mode(s)/runs, writes metrics CSV + summary JSON into --out. Returns the
// process exit code (0 on success).
int cli_main(const std::vector<std::string>& args);
int cli_main(int argc, char** argv);

}  // namespace hddf
