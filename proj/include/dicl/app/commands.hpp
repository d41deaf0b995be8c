#pragma once

#include "dicl/app/config.hpp"
#include "dicl/error.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace dicl::app {

/// Command-line overrides; each replaces the matching config key when set.
struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> jobs;
  std::optional<std::string> backend_url;
};

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitBackend = 3, kExitNumerical = 4 };

int exit_code_for(ErrorKind kind);

std::vector<std::string> command_names();
const Schema& command_schema(const std::string& verb);

/// Applies overrides, validates, runs, and writes outputs plus
/// resolved_config.json into the output directory. Progress goes to `log`.
/// Returns the output directory.
std::filesystem::path run_command(const std::string& verb, const json& raw_config, const RunOptions& options,
                                  std::ostream& log);

}  // namespace dicl::app
