#pragma once
// Experiment outputs:
//   config.json                 full experiment configuration
//   metrics.csv                 one row per (strategy, trial, step)
//   trials.json                 per-trial seeds, errors, call counts, GP hyperparameters per step
//   summary.json                per-step mean/SEM and final-step Welch comparisons
//   logs/<strategy>_trial<k>.csv  acquisition records of logged trials
//   run_info.json               timestamps (the only non-deterministic file)

#include "activeqc/harness.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include <json.hpp>

namespace aqc::io {

nlohmann::json experiment_config_to_json(const harness::ExperimentConfig& cfg);
// Missing keys keep the values of `base`; unknown keys raise ConfigError.
harness::ExperimentConfig experiment_config_from_json(const nlohmann::json& j, harness::ExperimentConfig base = {});

void write_metrics_csv(std::ostream& os, const std::vector<harness::TrialResult>& trials);
// Rebuilds strategy, trial and step metrics (other fields stay empty).
std::vector<harness::TrialResult> read_metrics_csv(std::istream& is);

nlohmann::json trials_json(const std::vector<harness::TrialResult>& trials);
// Copies seeds, errors and GP hyperparameters onto trials read from metrics.csv.
void apply_trials_json(const nlohmann::json& j, std::vector<harness::TrialResult>& trials);

nlohmann::json summary_json(const std::map<acq::Strategy, std::vector<harness::StepAggregate>>& aggregates,
                            const std::vector<harness::Comparison>& comparisons);

void write_acquisition_log_csv(std::ostream& os, const harness::TrialResult& trial);
std::vector<harness::LogEntry> read_acquisition_log_csv(std::istream& is);

// Grid as `side` comma-separated rows; NaN written as "nan".
void write_grid_csv(std::ostream& os, int side, const std::vector<double>& values);
// round(255 (v - min) / (max - min)) over finite values; NaN -> 0; constant grids -> 0.
std::vector<std::uint8_t> to_gray(const std::vector<double>& values);
void write_pgm(std::ostream& os, int side, const std::vector<double>& values);

// Writes everything except run_info.json; throws IoError.
void save_experiment(const harness::ExperimentResult& result, const std::filesystem::path& dir);
void write_run_info(const std::filesystem::path& dir, const std::string& started, const std::string& finished);

// <dir>/<name>.csv and <dir>/<name>.pgm for every grid in the set.
void save_maps(const harness::MapSet& maps, const std::filesystem::path& dir);

std::string utc_timestamp();

} // namespace aqc::io
