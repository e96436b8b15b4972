#pragma once
// activeqc command line: generate, run, maps, analyze.

#include "activeqc/error.hpp"
#include "activeqc/harness.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace aqc::cli {

enum ExitCode : int { Ok = 0, Config = 2, Io = 3, StrategyAbort = 4, MissingArtifact = 5 };

// A required input (results directory, log, step) is absent.
class MissingArtifactError : public Error {
public:
    using Error::Error;
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::optional<int> steps;
    std::optional<int> grid;
    std::optional<int> log_trials;
    std::optional<std::string> task;
    std::vector<std::string> strategies;
};

struct CliConfig {
    std::string subcommand;
    std::filesystem::path config_path; // empty = defaults
    std::filesystem::path out_dir;
    std::filesystem::path dataset_dir; // run: load instead of generating
    std::filesystem::path results_dir; // maps, analyze
    Overrides overrides;
    int jobs = 1;
    int step = 6;                  // maps
    std::string strategy = "ActiveQC"; // maps
    int trial = 0;                 // maps
    int verbosity = 1;
};

// Config file, then flags, then ACTIVEQC_SEED. Throws ConfigError.
harness::ExperimentConfig resolve_config(const CliConfig& cli);

int cmd_generate(const CliConfig& cli, std::ostream& out);
int cmd_run(const CliConfig& cli, std::ostream& out);
int cmd_maps(const CliConfig& cli, std::ostream& out);
int cmd_analyze(const CliConfig& cli, std::ostream& out);

// Parses argv, dispatches, and maps exceptions to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace aqc::cli
