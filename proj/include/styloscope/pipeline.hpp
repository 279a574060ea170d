#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "styloscope/config.hpp"
#include "styloscope/errors.hpp"

namespace styloscope {

inline constexpr std::string_view kCommands[] = {
    "ingest", "extract", "grid", "multiclass", "sweep", "id", "shuffle-grid", "transfer", "map", "report"};

/// Paths of the artifacts a command wrote, relative to the output directory.
struct CommandResult {
  std::vector<std::string> artifacts;
};

/// Runs one subcommand. `backend` overrides the backend built from the
/// config (tests inject mocks here). Throws Error; see exit_status().
CommandResult run_command(std::string_view command, const RunConfig& config,
                          std::shared_ptr<Backend> backend = nullptr);

/// 0 success, 1 user error, 2 dependency/backend error.
int exit_status(ErrorCode code);

}  // namespace styloscope
