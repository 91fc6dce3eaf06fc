#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "experiment.h"

namespace headlens::cli {

enum ExitCode : int { kOk = 0, kInvariantFailure = 1, kIoOrConfig = 2, kJudgeFailure = 3 };

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> manifest;  // validate only; used instead of --config
  Overrides overrides;
};

int cmd_validate(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_profile(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_evaluate(const CommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_report(const CommandOptions& options, std::ostream& out, std::ostream& err);

// Parses argv and dispatches to a subcommand.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace headlens::cli
