#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace gainrag::cli {

/// Runs one pipeline command. `args` excludes the program name, e.g.
/// {"synthesize", "--config", "config.json"}. Artifacts land in the
/// configured output directory together with a copy of the resolved
/// configuration; a one-line machine-parsable summary goes to `out`.
/// Returns the process exit status (0 on success).
int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);

} // namespace gainrag::cli
