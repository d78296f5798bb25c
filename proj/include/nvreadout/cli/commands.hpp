// Copyright 2026 The nvreadout Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: subcommand dispatch, output files and the run
// report.

#ifndef NVREADOUT_CLI_COMMANDS_HPP
#define NVREADOUT_CLI_COMMANDS_HPP

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace nvreadout::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitIo = 1,
  kExitConfig = 2,
  kExitConvergence = 3,
  kExitData = 4,
};

/// Output directory used when --out is absent.
inline constexpr const char* kOutDirEnv = "NVREADOUT_OUT_DIR";
inline constexpr const char* kDefaultOutDir = "nvreadout-out";

/// `args[0]` is the program name. The summary goes to `out`, diagnostics
/// to `err`.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t hash = 14695981039346656037ULL);

}  // namespace nvreadout::cli

#endif  // NVREADOUT_CLI_COMMANDS_HPP
