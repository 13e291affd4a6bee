#pragma once

// Flat "key = value" configuration text. '#' starts a comment; blank lines
// are ignored; later keys override earlier ones.

#include <map>
#include <string>

#include "sem/harness.hpp"
#include "sem/perf_model.hpp"

namespace sem {

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_config_file(const std::string& path);

/// Applies bubble keys; unknown keys or malformed values throw ConfigError.
void apply_bubble_config(const KeyValues& kv, BubbleConfig& config);

/// Applies scenario keys (perf model inputs and machine parameters).
void apply_perf_config(const KeyValues& kv, perf::SimConfig& config, perf::MachineModel& machine);

/// Key reference text for --help output and the README.
std::string bubble_config_keys();
std::string perf_config_keys();

}  // namespace sem
