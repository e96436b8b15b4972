#include "activeqc/results_io.hpp"

#include "activeqc/dataset_io.hpp"
#include "activeqc/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace aqc::io {

namespace fs = std::filesystem;
using nlohmann::json;
using harness::ExperimentConfig;
using harness::StepMetrics;
using harness::TrialResult;

namespace {

template <class T>
void take(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

json train_to_json(const net::TrainConfig& t) {
    return {{"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"learning_rate", t.learning_rate},
            {"multitask_weight", t.multitask_weight},
            {"center_inputs", t.center_inputs}};
}

net::TrainConfig train_from_json(const json& j, net::TrainConfig t) {
    for (const auto& [k, v] : j.items()) {
        if (k != "epochs" && k != "batch_size" && k != "learning_rate" && k != "multitask_weight" &&
            k != "center_inputs")
            throw ConfigError("unknown key '" + k + "' in training config");
    }
    take(j, "epochs", t.epochs);
    take(j, "batch_size", t.batch_size);
    take(j, "learning_rate", t.learning_rate);
    take(j, "multitask_weight", t.multitask_weight);
    take(j, "center_inputs", t.center_inputs);
    return t;
}

json hyper_to_json(const gp::GPHyperparams& h) {
    return {{"lengthscale", h.lengthscale},
            {"signal_variance", h.signal_variance},
            {"noise_variance", h.noise_variance},
            {"prior_mean", h.prior_mean}};
}

std::string join_ids(const std::vector<std::size_t>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(ids[i]);
    }
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw IoError("cannot write " + p.string());
    os << std::setprecision(17);
    return os;
}

void write_num(std::ostream& os, double v) {
    if (std::isnan(v))
        os << "nan";
    else
        os << v;
}

json mean_sem(const harness::MeanSem& m) { return {{"mean", m.mean}, {"sem", m.sem}}; }

} // namespace

json experiment_config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["task"] = std::string(harness::to_string(cfg.task));
    j["strategies"] = json::array();
    for (auto s : cfg.strategies) j["strategies"].push_back(std::string(acq::to_string(s)));
    j["weights"] = {{"alpha", cfg.weights.alpha}, {"beta", cfg.weights.beta}, {"gamma", cfg.weights.gamma}};
    j["distance_mode"] = cfg.distance_mode == acq::DistanceMode::Sum ? "sum" : "nearest";
    j["tau"] = cfg.tau;
    j["tau_schedule"] = cfg.tau_schedule;
    j["retroactive_gating"] = cfg.retroactive_gating;
    j["batch_fraction"] = cfg.batch_fraction;
    j["n_steps"] = cfg.n_steps;
    j["n_trials"] = cfg.n_trials;
    j["seed"] = cfg.seed;
    j["log_trials"] = cfg.log_trials;
    j["train"] = train_to_json(cfg.train);
    j["error_train"] = train_to_json(cfg.error_train);
    j["bench"] = bench::config_to_json(cfg.bench);
    return j;
}

ExperimentConfig experiment_config_from_json(const json& j, ExperimentConfig c) {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    static const char* known[] = {"task",       "strategies",     "weights",    "distance_mode", "tau",
                                  "tau_schedule", "retroactive_gating", "batch_fraction", "n_steps",
                                  "n_trials",   "seed",           "log_trials", "train",         "error_train",
                                  "bench"};
    for (const auto& [k, v] : j.items()) {
        if (std::find_if(std::begin(known), std::end(known), [&](const char* n) { return k == n; }) ==
            std::end(known))
            throw ConfigError("unknown key '" + k + "' in experiment config");
    }
    try {
        if (auto it = j.find("task"); it != j.end()) c.task = harness::task_from_string(it->get<std::string>());
        if (auto it = j.find("strategies"); it != j.end()) {
            c.strategies.clear();
            for (const auto& s : *it) c.strategies.push_back(acq::strategy_from_string(s.get<std::string>()));
        }
        if (auto it = j.find("weights"); it != j.end()) {
            take(*it, "alpha", c.weights.alpha);
            take(*it, "beta", c.weights.beta);
            take(*it, "gamma", c.weights.gamma);
        }
        if (auto it = j.find("distance_mode"); it != j.end()) {
            const auto m = it->get<std::string>();
            if (m == "sum")
                c.distance_mode = acq::DistanceMode::Sum;
            else if (m == "nearest")
                c.distance_mode = acq::DistanceMode::Nearest;
            else
                throw ConfigError("distance_mode must be 'sum' or 'nearest'");
        }
        take(j, "tau", c.tau);
        take(j, "tau_schedule", c.tau_schedule);
        take(j, "retroactive_gating", c.retroactive_gating);
        take(j, "batch_fraction", c.batch_fraction);
        take(j, "n_steps", c.n_steps);
        take(j, "n_trials", c.n_trials);
        take(j, "seed", c.seed);
        take(j, "log_trials", c.log_trials);
        if (auto it = j.find("train"); it != j.end()) c.train = train_from_json(*it, c.train);
        if (auto it = j.find("error_train"); it != j.end()) c.error_train = train_from_json(*it, c.error_train);
        if (auto it = j.find("bench"); it != j.end()) c.bench = bench::config_from_json(*it, c.bench);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    c.validate();
    return c;
}

void write_metrics_csv(std::ostream& os, const std::vector<TrialResult>& trials) {
    os << std::setprecision(17);
    os << "strategy,trial,step,mse_clean,mse_raw,noisy_ratio,retained,acquired,tau,relaxed,skipped,shortfall,"
          "batch_ids\n";
    for (const auto& t : trials) {
        for (const auto& m : t.steps) {
            os << acq::to_string(t.strategy) << ',' << t.trial << ',' << m.step << ',';
            write_num(os, m.mse_clean);
            os << ',';
            write_num(os, m.mse_raw);
            os << ',';
            write_num(os, m.noisy_ratio);
            os << ',' << m.retained << ',' << m.acquired << ',' << m.tau << ',' << int(m.relaxed) << ','
               << int(m.skipped) << ',' << int(m.shortfall) << ',' << join_ids(m.batch_ids) << '\n';
        }
    }
}

std::vector<TrialResult> read_metrics_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("strategy,trial,step,mse_clean", 0) != 0)
        throw ConfigError("metrics csv: bad header");
    std::vector<TrialResult> out;
    auto to_d = [](const std::string& s) { return s == "nan" ? std::nan("") : std::stod(s); };
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto c = split_csv(line);
        if (c.size() != 13) throw ConfigError("metrics csv: expected 13 columns in '" + line + "'");
        try {
            const auto strategy = acq::strategy_from_string(c[0]);
            const int trial = std::stoi(c[1]);
            StepMetrics m;
            m.step = std::stoi(c[2]);
            m.mse_clean = to_d(c[3]);
            m.mse_raw = to_d(c[4]);
            m.noisy_ratio = to_d(c[5]);
            m.retained = std::stoul(c[6]);
            m.acquired = std::stoul(c[7]);
            m.tau = to_d(c[8]);
            m.relaxed = c[9] == "1";
            m.skipped = c[10] == "1";
            m.shortfall = c[11] == "1";
            std::istringstream ids(c[12]);
            for (std::size_t id; ids >> id;) m.batch_ids.push_back(id);
            auto it = std::find_if(out.begin(), out.end(),
                                   [&](const TrialResult& t) { return t.strategy == strategy && t.trial == trial; });
            if (it == out.end()) {
                out.emplace_back();
                it = std::prev(out.end());
                it->strategy = strategy;
                it->trial = trial;
            }
            if (m.step != static_cast<int>(it->steps.size()) + 1) throw ConfigError("metrics csv: steps out of order");
            it->steps.push_back(std::move(m));
        } catch (const std::logic_error&) {
            throw ConfigError("metrics csv: malformed row '" + line + "'");
        }
    }
    return out;
}

json trials_json(const std::vector<TrialResult>& trials) {
    json arr = json::array();
    for (const auto& t : trials) {
        json e;
        e["strategy"] = std::string(acq::to_string(t.strategy));
        e["trial"] = t.trial;
        e["trial_seed"] = t.trial_seed;
        e["seed_ids"] = t.seed_ids;
        e["error"] = t.error;
        e["gp_calls"] = t.gp_calls;
        e["error_model_calls"] = t.error_model_calls;
        json hyper = json::array();
        for (const auto& m : t.steps) hyper.push_back(m.gp_hyper ? hyper_to_json(*m.gp_hyper) : json(nullptr));
        e["gp_hyperparams"] = std::move(hyper);
        arr.push_back(std::move(e));
    }
    return arr;
}

void apply_trials_json(const json& j, std::vector<TrialResult>& trials) {
    try {
        for (const auto& e : j) {
            const auto s = acq::strategy_from_string(e.at("strategy").get<std::string>());
            const int k = e.at("trial").get<int>();
            auto it = std::find_if(trials.begin(), trials.end(),
                                   [&](const TrialResult& t) { return t.strategy == s && t.trial == k; });
            if (it == trials.end()) {
                // aborted before its first step
                trials.emplace_back();
                it = std::prev(trials.end());
                it->strategy = s;
                it->trial = k;
            }
            it->trial_seed = e.at("trial_seed").get<std::uint64_t>();
            it->seed_ids = e.at("seed_ids").get<std::vector<std::size_t>>();
            it->error = e.at("error").get<std::string>();
            it->gp_calls = e.at("gp_calls").get<std::size_t>();
            it->error_model_calls = e.at("error_model_calls").get<std::size_t>();
            const auto& hyper = e.at("gp_hyperparams");
            for (std::size_t i = 0; i < hyper.size() && i < it->steps.size(); ++i) {
                if (hyper[i].is_null()) continue;
                gp::GPHyperparams h;
                h.lengthscale = hyper[i].at("lengthscale");
                h.signal_variance = hyper[i].at("signal_variance");
                h.noise_variance = hyper[i].at("noise_variance");
                h.prior_mean = hyper[i].at("prior_mean");
                it->steps[i].gp_hyper = h;
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("trials.json: ") + e.what());
    }
}

json summary_json(const std::map<acq::Strategy, std::vector<harness::StepAggregate>>& aggregates,
                  const std::vector<harness::Comparison>& comparisons) {
    json j;
    json per = json::object();
    for (const auto& [s, rows] : aggregates) {
        json arr = json::array();
        for (const auto& a : rows) {
            arr.push_back({{"step", a.step},
                           {"mse_clean", mean_sem(a.mse_clean)},
                           {"mse_raw", mean_sem(a.mse_raw)},
                           {"noisy_ratio", mean_sem(a.noisy_ratio)},
                           {"retained", mean_sem(a.retained)}});
        }
        per[std::string(acq::to_string(s))] = std::move(arr);
    }
    j["steps"] = std::move(per);
    json cmp = json::array();
    for (const auto& c : comparisons) {
        cmp.push_back({{"reference", std::string(acq::to_string(c.reference))},
                       {"other", std::string(acq::to_string(c.other))},
                       {"step", c.step},
                       {"metric", "mse_clean"},
                       {"mean_reference", c.mean_reference},
                       {"mean_other", c.mean_other},
                       {"t", std::isfinite(c.welch.t) ? json(c.welch.t) : json(c.welch.t > 0 ? "inf" : "-inf")},
                       {"df", c.welch.df},
                       {"p", c.welch.p},
                       {"degenerate", c.welch.degenerate}});
    }
    j["comparisons"] = std::move(cmp);
    return j;
}

void write_acquisition_log_csv(std::ostream& os, const TrialResult& trial) {
    os << std::setprecision(17);
    os << "step,candidate,row,col,e_hat,d,r,s,q_hat,a,selected\n";
    for (const auto& e : trial.log) {
        const auto& r = e.record;
        os << e.step << ',' << r.candidate << ',' << e.row << ',' << e.col << ',';
        for (double v : {r.e_hat, r.d, r.r, r.s, r.q_hat, r.a}) {
            write_num(os, v);
            os << ',';
        }
        os << int(r.selected) << '\n';
    }
}

std::vector<harness::LogEntry> read_acquisition_log_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "step,candidate,row,col,e_hat,d,r,s,q_hat,a,selected")
        throw ConfigError("acquisition log: bad header");
    std::vector<harness::LogEntry> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto c = split_csv(line);
        if (c.size() != 11) throw ConfigError("acquisition log: expected 11 columns in '" + line + "'");
        try {
            auto to_d = [](const std::string& s) { return s == "nan" ? std::nan("") : std::stod(s); };
            harness::LogEntry e;
            e.step = std::stoi(c[0]);
            e.record.candidate = std::stoul(c[1]);
            e.row = std::stoi(c[2]);
            e.col = std::stoi(c[3]);
            e.record.e_hat = to_d(c[4]);
            e.record.d = to_d(c[5]);
            e.record.r = to_d(c[6]);
            e.record.s = to_d(c[7]);
            e.record.q_hat = to_d(c[8]);
            e.record.a = to_d(c[9]);
            e.record.selected = c[10] == "1";
            out.push_back(e);
        } catch (const std::logic_error&) {
            throw ConfigError("acquisition log: malformed row '" + line + "'");
        }
    }
    return out;
}

void write_grid_csv(std::ostream& os, int side, const std::vector<double>& values) {
    if (values.size() != static_cast<std::size_t>(side) * static_cast<std::size_t>(side))
        throw ContractViolation("write_grid_csv: size mismatch");
    os << std::setprecision(17);
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            if (c) os << ',';
            write_num(os, values[static_cast<std::size_t>(r * side + c)]);
        }
        os << '\n';
    }
}

std::vector<std::uint8_t> to_gray(const std::vector<double>& values) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : values) {
        if (!std::isfinite(v)) continue;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<std::uint8_t> out(values.size(), 0);
    if (!(hi > lo)) return out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) continue;
        out[i] = static_cast<std::uint8_t>(std::lround(255.0 * (values[i] - lo) / (hi - lo)));
    }
    return out;
}

void write_pgm(std::ostream& os, int side, const std::vector<double>& values) {
    if (values.size() != static_cast<std::size_t>(side) * static_cast<std::size_t>(side))
        throw ContractViolation("write_pgm: size mismatch");
    const auto px = to_gray(values);
    os << "P5\n" << side << ' ' << side << "\n255\n";
    os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

void save_experiment(const harness::ExperimentResult& result, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir / "logs", ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    {
        auto os = open_out(dir / "config.json");
        os << experiment_config_to_json(result.config).dump(2) << '\n';
    }
    {
        auto os = open_out(dir / "metrics.csv");
        write_metrics_csv(os, result.trials);
    }
    {
        auto os = open_out(dir / "trials.json");
        os << trials_json(result.trials).dump(2) << '\n';
    }
    {
        auto os = open_out(dir / "summary.json");
        os << summary_json(result.aggregates, result.comparisons).dump(2) << '\n';
    }
    for (const auto& t : result.trials) {
        if (t.log.empty()) continue;
        auto os = open_out(dir / "logs" / (std::string(acq::to_string(t.strategy)) + "_trial" +
                                           std::to_string(t.trial) + ".csv"));
        write_acquisition_log_csv(os, t);
        if (!os) throw IoError("write failed in logs/");
    }
}

void write_run_info(const fs::path& dir, const std::string& started, const std::string& finished) {
    auto os = open_out(dir / "run_info.json");
    os << json{{"started", started}, {"finished", finished}}.dump(2) << '\n';
}

void save_maps(const harness::MapSet& maps, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (const auto& [name, grid] : maps.grids) {
        {
            auto os = open_out(dir / (name + ".csv"));
            write_grid_csv(os, maps.side, grid);
        }
        std::ofstream os(dir / (name + ".pgm"), std::ios::binary);
        if (!os) throw IoError("cannot write " + (dir / (name + ".pgm")).string());
        write_pgm(os, maps.side, grid);
    }
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

} // namespace aqc::io
