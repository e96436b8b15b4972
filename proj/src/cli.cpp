#include "activeqc/cli.hpp"

#include "activeqc/dataset_io.hpp"
#include "activeqc/error.hpp"
#include "activeqc/results_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace aqc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& p, bool missing_is_artifact) {
    std::ifstream is(p);
    if (!is) {
        if (missing_is_artifact) throw MissingArtifactError("missing " + p.string());
        throw IoError("cannot read " + p.string());
    }
    try {
        return json::parse(is);
    } catch (const json::parse_error& e) {
        // e.what() carries "at line L, column C"
        throw ConfigError(p.string() + ": " + e.what());
    }
}

std::uint64_t parse_seed(const std::string& s) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || s.front() == '-') throw ConfigError("ACTIVEQC_SEED is not an unsigned integer: " + s);
    return v;
}

void print_summary(const json& summary, std::ostream& out) {
    const auto& steps = summary.at("steps");
    out << std::setprecision(4);
    out << "strategy    step  mse_clean (sem)          mse_raw (sem)            noisy_ratio  retained\n";
    for (const auto& [name, rows] : steps.items()) {
        if (rows.empty()) continue;
        const auto& r = rows.back();
        out << std::left << std::setw(10) << name << std::right << std::setw(6) << r.at("step").get<int>() << "  "
            << std::scientific << r["mse_clean"]["mean"].get<double>() << " (" << r["mse_clean"]["sem"].get<double>()
            << ")  " << r["mse_raw"]["mean"].get<double>() << " (" << r["mse_raw"]["sem"].get<double>() << ")  "
            << std::fixed << std::setw(10) << r["noisy_ratio"]["mean"].get<double>() << "  " << std::setw(8)
            << r["retained"]["mean"].get<double>() << '\n';
        out.unsetf(std::ios::floatfield);
    }
    const auto& cmp = summary.at("comparisons");
    if (cmp.empty()) return;
    out << "\nWelch t-test on mse_clean\n";
    for (const auto& c : cmp) {
        out << c.at("reference").get<std::string>() << " vs " << c.at("other").get<std::string>() << "  step "
            << c.at("step").get<int>() << ": " << std::scientific << c.at("mean_reference").get<double>() << " vs "
            << c.at("mean_other").get<double>() << "  p=" << c.at("p").get<double>()
            << (c.at("degenerate").get<bool>() ? " (zero variance)" : "") << '\n';
        out.unsetf(std::ios::floatfield);
    }
}

fs::path require_dir(const fs::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("missing ") + what);
    return p;
}

} // namespace

harness::ExperimentConfig resolve_config(const CliConfig& cli) {
    harness::ExperimentConfig cfg;
    json j = json::object();
    if (!cli.config_path.empty()) j = read_json_file(cli.config_path, false);
    const auto& o = cli.overrides;
    try {
        if (o.seed) j["seed"] = *o.seed;
        if (o.trials) j["n_trials"] = *o.trials;
        if (o.steps) j["n_steps"] = *o.steps;
        if (o.log_trials) j["log_trials"] = *o.log_trials;
        if (o.task) j["task"] = *o.task;
        if (!o.strategies.empty()) j["strategies"] = o.strategies;
        if (o.grid) {
            if (!j.contains("bench")) j["bench"] = json::object();
            j["bench"]["grid"] = *o.grid;
        }
        if (const char* env = std::getenv("ACTIVEQC_SEED"); env && *env) j["seed"] = parse_seed(env);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    cfg = io::experiment_config_from_json(j);
    // one seed drives both the benchmark and the trials unless the file pins the bench seed
    if (!(j.contains("bench") && j["bench"].contains("seed")) || o.seed || std::getenv("ACTIVEQC_SEED"))
        cfg.bench.seed = cfg.seed;
    return cfg;
}

int cmd_generate(const CliConfig& cli, std::ostream& out) {
    const auto cfg = resolve_config(cli);
    const auto dir = require_dir(cli.out_dir, "--out");
    const auto ds = bench::build_dataset(cfg.bench, cli.jobs);
    bench::save_dataset(ds, dir);
    std::size_t corrupted = 0;
    for (const auto& s : ds.samples) corrupted += s.corrupted ? 1 : 0;
    out << "samples: " << ds.size() << '\n';
    out << "corrupted fraction: " << std::fixed << std::setprecision(4)
        << static_cast<double>(corrupted) / static_cast<double>(ds.size()) << '\n';
    out.unsetf(std::ios::floatfield);
    return Ok;
}

int cmd_run(const CliConfig& cli, std::ostream& out) {
    auto cfg = resolve_config(cli);
    const auto dir = require_dir(cli.out_dir, "--out");
    const auto started = io::utc_timestamp();
    bench::Dataset ds;
    if (!cli.dataset_dir.empty()) {
        if (!fs::exists(cli.dataset_dir / "manifest.json"))
            throw MissingArtifactError("no dataset manifest in " + cli.dataset_dir.string());
        ds = bench::load_dataset(cli.dataset_dir);
        cfg.bench = ds.config;
    } else {
        ds = bench::build_dataset(cfg.bench, cli.jobs);
    }
    if (cli.verbosity > 0) {
        out << "running " << harness::to_string(cfg.task) << ": " << cfg.strategies.size() << " strategies x "
            << cfg.n_trials << " trials x " << cfg.n_steps << " steps on " << ds.size() << " samples\n";
    }
    const auto res = harness::run_experiment(ds, cfg, cli.jobs);
    io::save_experiment(res, dir);
    io::write_run_info(dir, started, io::utc_timestamp());
    if (cli.verbosity > 0) print_summary(io::summary_json(res.aggregates, res.comparisons), out);
    if (res.any_aborted()) {
        for (const auto& t : res.trials) {
            if (!t.error.empty())
                out << "aborted: " << acq::to_string(t.strategy) << " trial " << t.trial << ": " << t.error << '\n';
        }
        return StrategyAbort;
    }
    return Ok;
}

int cmd_maps(const CliConfig& cli, std::ostream& out) {
    const auto rdir = require_dir(cli.results_dir, "--results");
    if (!fs::is_directory(rdir)) throw MissingArtifactError("no results directory " + rdir.string());
    const auto cfg = io::experiment_config_from_json(read_json_file(rdir / "config.json", true));
    const auto strategy = acq::strategy_from_string(cli.strategy);

    std::vector<harness::TrialResult> trials;
    {
        std::ifstream is(rdir / "metrics.csv");
        if (!is) throw MissingArtifactError("missing " + (rdir / "metrics.csv").string());
        trials = io::read_metrics_csv(is);
    }
    io::apply_trials_json(read_json_file(rdir / "trials.json", true), trials);
    auto it = std::find_if(trials.begin(), trials.end(), [&](const harness::TrialResult& t) {
        return t.strategy == strategy && t.trial == cli.trial;
    });
    if (it == trials.end())
        throw MissingArtifactError("no " + std::string(acq::to_string(strategy)) + " trial " +
                                   std::to_string(cli.trial) + " in results");
    if (cli.step < 1 || static_cast<std::size_t>(cli.step) > it->steps.size())
        throw MissingArtifactError("step " + std::to_string(cli.step) + " was not recorded for this trial");

    const auto log_path =
        rdir / "logs" / (std::string(acq::to_string(strategy)) + "_trial" + std::to_string(cli.trial) + ".csv");
    {
        std::ifstream is(log_path);
        if (!is) throw MissingArtifactError("missing acquisition log " + log_path.string());
        it->log = io::read_acquisition_log_csv(is);
    }
    if (std::none_of(it->log.begin(), it->log.end(), [&](const harness::LogEntry& e) { return e.step == cli.step; }) &&
        !it->steps[static_cast<std::size_t>(cli.step - 1)].skipped)
        throw MissingArtifactError("acquisition log has no records for step " + std::to_string(cli.step));

    const auto ds = cli.dataset_dir.empty() ? bench::build_dataset(cfg.bench, cli.jobs)
                                            : bench::load_dataset(cli.dataset_dir);
    const auto maps = harness::export_maps(ds, *it, cli.step);
    const auto odir = cli.out_dir.empty() ? rdir / "maps" /
                                                (std::string(acq::to_string(strategy)) + "_trial" +
                                                 std::to_string(cli.trial) + "_step" + std::to_string(cli.step))
                                          : cli.out_dir;
    io::save_maps(maps, odir);
    if (cli.verbosity > 0) {
        out << "wrote " << maps.grids.size() << " maps to " << odir.string() << ':';
        for (const auto& [name, g] : maps.grids) out << ' ' << name;
        out << '\n';
    }
    return Ok;
}

int cmd_analyze(const CliConfig& cli, std::ostream& out) {
    const auto rdir = require_dir(cli.results_dir, "--results");
    const auto summary = read_json_file(rdir / "summary.json", true);
    try {
        print_summary(summary, out);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("summary.json: ") + e.what());
    }
    return Ok;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Quality-gated active learning on a synthetic band-excitation benchmark", "activeqc"};
    app.require_subcommand(1);
    CliConfig cli;
    std::string config_path, out_dir, dataset_dir, results_dir;
    std::uint64_t seed = 0;
    int trials = 0, steps = 0, grid = 0, log_trials = 0;
    std::string task;
    bool quiet = false;

    auto common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "base seed");
        sub->add_option("--grid", grid, "field size G");
        sub->add_option("-j,--jobs", cli.jobs, "worker threads")->check(CLI::PositiveNumber);
        sub->add_flag("-q,--quiet", quiet, "print nothing on success");
    };

    auto* gen = app.add_subcommand("generate", "build and save the benchmark dataset");
    common(gen);
    gen->add_option("-o,--out", out_dir, "output directory")->required();

    auto* run = app.add_subcommand("run", "run an active-learning experiment");
    common(run);
    run->add_option("-o,--out", out_dir, "results directory")->required();
    run->add_option("--dataset", dataset_dir, "saved dataset to use instead of generating one");
    run->add_option("--trials", trials, "trials per strategy");
    run->add_option("--steps", steps, "acquisition steps");
    run->add_option("--strategies", cli.overrides.strategies, "subset of random, active, activemt, activeqc")
        ->delimiter(',');
    run->add_option("--task", task, "im2spec or spec2im");
    run->add_option("--log-trials", log_trials, "trials whose acquisition logs are kept (-1 = all)");

    auto* maps = app.add_subcommand("maps", "export acquisition component maps for one step");
    maps->add_option("-r,--results", results_dir, "results directory")->required();
    maps->add_option("--step", cli.step, "acquisition step (1-based)");
    maps->add_option("--strategy", cli.strategy, "strategy name");
    maps->add_option("--trial", cli.trial, "trial index");
    maps->add_option("--dataset", dataset_dir, "saved dataset (default: rebuild from config)");
    maps->add_option("-o,--out", out_dir, "output directory (default: <results>/maps/...)");
    maps->add_option("-j,--jobs", cli.jobs, "worker threads")->check(CLI::PositiveNumber);
    maps->add_flag("-q,--quiet", quiet, "print nothing on success");

    auto* analyze = app.add_subcommand("analyze", "print the summary tables of a results directory");
    analyze->add_option("-r,--results", results_dir, "results directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? Ok : Config;
    }

    auto* sub = app.get_subcommands().front();
    cli.subcommand = sub->get_name();
    cli.config_path = config_path;
    cli.out_dir = out_dir;
    cli.dataset_dir = dataset_dir;
    cli.results_dir = results_dir;
    cli.verbosity = quiet ? 0 : 1;
    auto given = [&](const char* name) {
        auto* opt = sub->get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
    };
    if (given("--seed")) cli.overrides.seed = seed;
    if (given("--grid")) cli.overrides.grid = grid;
    if (given("--trials")) cli.overrides.trials = trials;
    if (given("--steps")) cli.overrides.steps = steps;
    if (given("--log-trials")) cli.overrides.log_trials = log_trials;
    if (given("--task")) cli.overrides.task = task;

    try {
        if (cli.subcommand == "generate") return cmd_generate(cli, out);
        if (cli.subcommand == "run") return cmd_run(cli, out);
        if (cli.subcommand == "maps") return cmd_maps(cli, out);
        return cmd_analyze(cli, out);
    } catch (const MissingArtifactError& e) {
        err << "error: " << e.what() << '\n';
        return MissingArtifact;
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << '\n';
        return Io;
    } catch (const fs::filesystem_error& e) {
        err << "I/O error: " << e.what() << '\n';
        return Io;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return Config;
    } catch (const RegionConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return Config;
    } catch (const SplitError& e) {
        err << "config error: " << e.what() << '\n';
        return Config;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace aqc::cli
