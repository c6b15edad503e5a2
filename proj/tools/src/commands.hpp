#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mvlab::cli {

/// Exit statuses of a run.
enum ExitCode : int { exit_ok = 0, exit_error = 1, exit_assertion_failed = 2 };

struct RunOptions {
    std::filesystem::path config;
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool strict = false;
};

const std::vector<std::string>& subcommands();

/// Runs one subcommand end to end: validates the config, writes the artifacts, the summary and
/// the manifest, and prints the summary to `log`. Errors are reported on `err`.
int run(const std::string& subcommand, const RunOptions& options, std::ostream& log, std::ostream& err);

}  // namespace mvlab::cli
