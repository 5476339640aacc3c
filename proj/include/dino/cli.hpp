#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dino/agents.hpp"
#include "dino/env.hpp"

namespace dino::cli {

struct RunConfig {
  agents::TrainConfig train;
  sim::EnvConfig env;
};

// key=value lines, '#' starts a comment. Keys are TrainConfig or EnvConfig
// field names; absent keys keep their defaults. Throws ConfigError naming
// the key and line for unknown keys, malformed values, or violated ranges.
RunConfig parse_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFault = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `dino` tool. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dino::cli
