#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "core/config.hpp"

namespace dapt {

inline constexpr const char* kVersionString = "0.1.0";

// The pipeline stages exposed to the outside world, in pipeline order.
std::vector<std::string> known_commands();

// Runs one stage against the settings. Progress and human-readable results
// go to `out`; every stage writes a run manifest (the effective settings
// plus comments) into the output directory. Throws ConfigError/DataError
// for user-fixable problems; anything else is an internal error.
void run_command(const std::string& command, Settings& settings,
                 std::ostream& out);

}  // namespace dapt
