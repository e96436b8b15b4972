#pragma once
// Pool-based active-learning loop: per-step training, quality gating,
// scoring, selection and measurement, plus trial/experiment aggregation.

#include "activeqc/acquisition.hpp"
#include "activeqc/bench.hpp"
#include "activeqc/gp.hpp"
#include "activeqc/net.hpp"
#include "activeqc/stats.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace aqc::harness {

enum class Task { Im2Spec, Spec2Im };

std::string_view to_string(Task t);
Task task_from_string(std::string_view name);

struct ExperimentConfig {
    Task task = Task::Im2Spec;
    std::vector<acq::Strategy> strategies{acq::Strategy::Random, acq::Strategy::Active, acq::Strategy::ActiveMT,
                                          acq::Strategy::ActiveQC};
    acq::AcquisitionWeights weights;
    acq::DistanceMode distance_mode = acq::DistanceMode::Sum;
    double tau = 0.90;
    std::vector<double> tau_schedule; // per step, overrides tau when non-empty
    bool retroactive_gating = true;
    double batch_fraction = 0.005;
    int n_steps = 25;
    int n_trials = 30;
    std::uint64_t seed = 1234;
    bench::BenchConfig bench;
    net::TrainConfig train;       // base models (rng_seed is derived per step)
    net::TrainConfig error_train; // surrogate error model
    int log_trials = -1;          // trials whose acquisition logs are kept; -1 = all

    ExperimentConfig();
    void validate() const;
    double tau_at(int step) const; // step is 1-based
};

struct StepMetrics {
    int step = 0;
    double mse_clean = 0.0;
    double mse_raw = 0.0;
    double noisy_ratio = 0.0;
    std::size_t retained = 0;
    std::size_t acquired = 0;
    double tau = 0.0;
    bool relaxed = false;   // tau was halved to find a candidate
    bool skipped = false;   // no batch could be formed
    bool shortfall = false; // fewer than k eligible candidates
    std::optional<gp::GPHyperparams> gp_hyper; // quality surface used this step
    std::vector<std::size_t> batch_ids;
};

struct LogEntry {
    int step = 0;
    int row = 0; // candidate centre pixel
    int col = 0;
    acq::AcquisitionRecord record;
};

struct TrialResult {
    acq::Strategy strategy = acq::Strategy::Random;
    int trial = 0;
    std::uint64_t trial_seed = 0;
    std::vector<StepMetrics> steps;
    std::vector<LogEntry> log; // empty when the trial is not logged
    std::size_t gp_calls = 0;
    std::size_t error_model_calls = 0;
    std::vector<std::size_t> seed_ids; // the shared initial training set
    std::string error;                 // non-empty when the trial aborted
};

// Per-strategy trial state; exposed so single steps can be driven and inspected.
struct TrialState {
    const bench::Dataset* ds = nullptr;
    const ExperimentConfig* cfg = nullptr;
    acq::Strategy strategy = acq::Strategy::Random;
    std::uint64_t trial_seed = 0;
    std::size_t batch_size = 0;
    std::vector<std::size_t> measured; // acquisition order
    std::vector<std::size_t> retained; // current training set, ascending
    std::vector<std::size_t> pool;     // unmeasured candidates, ascending
    std::optional<bench::VirtualInstrument> instrument;
    std::mt19937_64 rng;
    std::optional<gp::GPModel> gp;
    std::size_t gp_calls = 0;
    std::size_t error_model_calls = 0;
    bool keep_log = true;
    std::vector<LogEntry> log;
};

TrialState init_trial(const bench::Dataset& ds, const ExperimentConfig& cfg, acq::Strategy strategy,
                      std::uint64_t trial_seed, const bench::DatasetSplit& split);

StepMetrics run_step(TrialState& state, int step);

TrialResult run_trial(const bench::Dataset& ds, const ExperimentConfig& cfg, acq::Strategy strategy, int trial);

std::uint64_t trial_seed(const ExperimentConfig& cfg, int trial);
bench::DatasetSplit trial_split(const bench::Dataset& ds, std::uint64_t trial_seed);
std::size_t batch_size(const ExperimentConfig& cfg, std::size_t pool_size);

// |corrupted ∩ ids| / |ids|; throws ContractViolation on an empty set.
double noisy_ratio(std::span<const std::size_t> ids, const bench::Dataset& ds);

struct MeanSem {
    double mean = 0.0;
    double sem = 0.0;
};

struct StepAggregate {
    int step = 0;
    MeanSem mse_clean, mse_raw, noisy_ratio, retained;
};

struct Comparison {
    acq::Strategy reference;
    acq::Strategy other;
    int step = 0;
    double mean_reference = 0.0;
    double mean_other = 0.0;
    stats::WelchResult welch;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<TrialResult> trials; // strategy-major, then trial index
    std::map<acq::Strategy, std::vector<StepAggregate>> aggregates;
    std::vector<Comparison> comparisons; // mse_clean, last three steps
    bool any_aborted() const;
};

// Trials of all strategies run as independent jobs on up to `jobs` threads;
// results do not depend on `jobs`.
ExperimentResult run_experiment(const bench::Dataset& ds, const ExperimentConfig& cfg, int jobs = 1);

std::map<acq::Strategy, std::vector<StepAggregate>> aggregate(const std::vector<TrialResult>& trials, int n_steps);
std::vector<Comparison> compare_final_steps(const std::vector<TrialResult>& trials, int n_steps,
                                            int last_steps = 3);

// Values from one step for every trial of a strategy (aborted trials excluded).
std::vector<double> step_values(const std::vector<TrialResult>& trials, acq::Strategy s, int step,
                                double StepMetrics::*field);

// Per-location grids of one logged step over the centres-per-side grid; NaN
// where a candidate component is unavailable (measured locations).
// `locations` marks 1 = measured before the step, 2 = new batch,
// 3 = unmeasured corrupted location, 0 otherwise.
struct MapSet {
    int side = 0;
    std::map<std::string, std::vector<double>> grids; // e_hat, d, r, q_hat, a, locations
};

// GP mean over every centre, refit from the measured ids with fixed hyperparameters.
std::vector<double> quality_grid(const bench::Dataset& ds, std::span<const std::size_t> measured,
                                 const gp::GPHyperparams& hyper);

// `entries` holds the log records of one step; `q_hat_grid` may be null.
MapSet build_maps(int side, acq::Strategy strategy, std::span<const LogEntry> entries,
                  std::span<const std::size_t> prior_measured, std::span<const std::size_t> batch,
                  const std::vector<bool>& corrupted, const std::vector<double>* q_hat_grid);

MapSet export_maps(const bench::Dataset& ds, const TrialResult& trial, int step);

} // namespace aqc::harness
