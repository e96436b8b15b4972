#include "activeqc/harness.hpp"

#include "activeqc/error.hpp"
#include "activeqc/parallel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>

namespace aqc::harness {

namespace {

using net::Matrix;

// Column-per-sample views of the dataset for one task.
struct TaskData {
    Matrix inputs;        // as measured
    Matrix targets;       // as measured
    Matrix clean_inputs;  // clean evaluation inputs
    Matrix clean_targets; // clean evaluation targets
    std::vector<gp::Coord> coords;
};

Matrix columns_of(const std::vector<std::vector<double>>& cols) {
    Matrix m(static_cast<Eigen::Index>(cols.front().size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        m.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(cols[j].data(), m.rows());
    }
    return m;
}

std::shared_ptr<const TaskData> make_task_data(const bench::Dataset& ds, Task task) {
    std::vector<std::vector<double>> patches, loops, clean, small;
    for (const auto& s : ds.samples) {
        patches.push_back(s.patch);
        loops.push_back(s.loop);
        clean.push_back(s.clean_loop);
        small.push_back(bench::center_crop(s.patch, ds.config.patch, ds.config.target_side));
    }
    auto d = std::make_shared<TaskData>();
    if (task == Task::Im2Spec) {
        d->inputs = columns_of(patches);
        d->targets = columns_of(loops);
        d->clean_inputs = d->inputs;
        d->clean_targets = columns_of(clean);
    } else {
        d->inputs = columns_of(loops);
        d->targets = columns_of(small);
        d->clean_inputs = columns_of(clean);
        d->clean_targets = d->targets;
    }
    for (const auto& s : ds.samples) d->coords.push_back(bench::normalized_coord(ds, s));
    return d;
}

Matrix gather(const Matrix& m, std::span<const std::size_t> ids) {
    Matrix out(m.rows(), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t j = 0; j < ids.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(ids[j]));
    return out;
}

net::NetSpec base_spec(const bench::Dataset& ds, Task task, acq::Strategy strategy) {
    const auto& b = ds.config;
    net::NetSpec spec = task == Task::Im2Spec ? net::NetSpec::im2spec(b.loop_length, b.patch * b.patch)
                                              : net::NetSpec::spec2im(b.loop_length, b.target_side * b.target_side);
    if (strategy == acq::Strategy::ActiveMT) spec = spec.with_reconstruction();
    return spec;
}

} // namespace

std::string_view to_string(Task t) { return t == Task::Im2Spec ? "Im2Spec" : "Spec2Im"; }

Task task_from_string(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "im2spec") return Task::Im2Spec;
    if (lower == "spec2im") return Task::Spec2Im;
    throw ConfigError("unknown task '" + std::string(name) + "'");
}

ExperimentConfig::ExperimentConfig() { error_train = net::default_error_model_config(0); }

void ExperimentConfig::validate() const {
    if (strategies.empty()) throw ConfigError("no strategies selected");
    weights.validate();
    if (!(batch_fraction > 0.0 && batch_fraction <= 1.0)) throw ConfigError("batch_fraction must be in (0, 1]");
    if (n_steps < 1) throw ConfigError("n_steps must be >= 1");
    if (n_trials < 1) throw ConfigError("n_trials must be >= 1");
    if (!tau_schedule.empty() && tau_schedule.size() < static_cast<std::size_t>(n_steps)) {
        throw ConfigError("tau schedule is shorter than n_steps");
    }
    bench.validate();
    train.validate();
    error_train.validate();
}

double ExperimentConfig::tau_at(int step) const {
    if (tau_schedule.empty()) return tau;
    return tau_schedule.at(static_cast<std::size_t>(step - 1));
}

std::uint64_t trial_seed(const ExperimentConfig& cfg, int trial) { return cfg.seed + static_cast<std::uint64_t>(trial); }

bench::DatasetSplit trial_split(const bench::Dataset& ds, std::uint64_t seed) {
    return bench::make_split(ds.size(), bench::mix_seed(seed, 11));
}

std::size_t batch_size(const ExperimentConfig& cfg, std::size_t pool_size) {
    const auto k = static_cast<std::size_t>(std::ceil(cfg.batch_fraction * static_cast<double>(pool_size) - 1e-12));
    if (k < 1) throw ConfigError("batch_fraction * pool size is below one sample");
    return k;
}

double noisy_ratio(std::span<const std::size_t> ids, const bench::Dataset& ds) {
    if (ids.empty()) throw ContractViolation("noisy_ratio: empty training set");
    std::size_t n = 0;
    for (auto id : ids) n += ds.samples.at(id).corrupted ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(ids.size());
}

namespace {

// Task matrices shared by every trial on the same dataset and task.
struct CacheKey {
    const bench::Dataset* ds;
    Task task;
    bool operator<(const CacheKey& o) const { return ds != o.ds ? ds < o.ds : task < o.task; }
};

std::mutex cache_mutex;
std::map<CacheKey, std::weak_ptr<const TaskData>> cache;

std::shared_ptr<const TaskData> task_data(const bench::Dataset& ds, Task task) {
    std::lock_guard lock(cache_mutex);
    auto& slot = cache[{&ds, task}];
    if (auto p = slot.lock()) return p;
    auto p = make_task_data(ds, task);
    slot = p;
    return p;
}

} // namespace

TrialState init_trial(const bench::Dataset& ds, const ExperimentConfig& cfg, acq::Strategy strategy,
                      std::uint64_t seed, const bench::DatasetSplit& split) {
    TrialState st;
    st.ds = &ds;
    st.cfg = &cfg;
    st.strategy = strategy;
    st.trial_seed = seed;
    st.batch_size = batch_size(cfg, split.pool_ids.size());
    st.measured = split.seed_ids;
    st.retained = split.seed_ids;
    std::sort(st.retained.begin(), st.retained.end());
    st.pool = split.pool_ids;
    std::sort(st.pool.begin(), st.pool.end());
    st.instrument.emplace(ds);
    for (auto id : st.measured) st.instrument->measure(id);
    st.rng.seed(bench::mix_seed(seed, 17));
    return st;
}

StepMetrics run_step(TrialState& st, int step) {
    const auto& cfg = *st.cfg;
    const auto& ds = *st.ds;
    const auto data = task_data(ds, cfg.task);
    const bool is_qc = st.strategy == acq::Strategy::ActiveQC;
    const bool is_random = st.strategy == acq::Strategy::Random;

    StepMetrics m;
    m.step = step;
    m.tau = cfg.tau_at(step);

    // (1) base model (and error model) on the retained training set
    std::vector<std::size_t> train_ids = st.retained.empty() ? st.measured : st.retained;
    std::sort(train_ids.begin(), train_ids.end());
    const Matrix x_train = gather(data->inputs, train_ids);
    const Matrix y_train = gather(data->targets, train_ids);
    const auto spec = base_spec(ds, cfg.task, st.strategy);
    net::TrainConfig tcfg = cfg.train;
    tcfg.rng_seed = bench::mix_seed(st.trial_seed, 2000 + static_cast<std::uint64_t>(step));
    const auto model = net::train_model(net::init_params(spec, bench::mix_seed(st.trial_seed, 1000 + step)), x_train,
                                        y_train, spec.multitask() ? &x_train : nullptr, tcfg)
                           .params;
    const auto train_fwd = net::forward_batch(model, x_train);

    std::optional<net::ErrorModel> error_model;
    if (!is_random) {
        net::TrainConfig ecfg = cfg.error_train;
        ecfg.rng_seed = bench::mix_seed(st.trial_seed, 3000 + static_cast<std::uint64_t>(step));
        error_model = net::train_error_model(train_fwd.latent, net::per_sample_mse(train_fwd.output, y_train), ecfg);
        ++st.error_model_calls;
    }

    // (2) quality surface over everything measured so far, then re-gating
    if (is_qc) {
        std::vector<gp::Coord> coords;
        std::vector<double> q;
        for (auto id : st.measured) {
            coords.push_back(data->coords[id]);
            q.push_back(std::clamp(ds.samples[id].quality, 0.0, 1.0));
        }
        double m0 = 0.0;
        for (double v : q) m0 += v;
        m0 /= static_cast<double>(q.size());
        const auto grid = gp::default_grid(gp::GPHyperparams{}, m0);
        m.gp_hyper = gp::select_hyperparams(coords, q, grid);
        st.gp = gp::gp_fit(coords, q, *m.gp_hyper);
        ++st.gp_calls;
        if (cfg.retroactive_gating) {
            const auto pred = gp::gp_predict(*st.gp, coords);
            st.retained.clear();
            for (std::size_t i = 0; i < st.measured.size(); ++i) {
                if (pred.mean[i] >= m.tau) st.retained.push_back(st.measured[i]);
            }
            std::sort(st.retained.begin(), st.retained.end());
        }
    }

    if (st.pool.empty()) {
        m.skipped = true;
    }

    // (3) scores over the remaining pool
    const Matrix x_pool = gather(data->inputs, st.pool);
    const auto pool_fwd = net::forward_batch(model, x_pool);
    acq::StrategyScores scores;
    std::vector<std::size_t> picked;
    if (!st.pool.empty()) {
        acq::StepContext ctx;
        ctx.weights = cfg.weights;
        ctx.tau = m.tau;
        ctx.distance_mode = cfg.distance_mode;
        ctx.n_candidates = st.pool.size();
        if (is_random) {
            ctx.rng = &st.rng;
        } else {
            ctx.candidate_latents = pool_fwd.latent;
            ctx.training_latents = train_fwd.latent;
            ctx.predicted_error = net::predict_errors(*error_model, pool_fwd.latent);
        }
        if (is_qc) {
            std::vector<gp::Coord> cand;
            for (auto id : st.pool) cand.push_back(data->coords[id]);
            ctx.q_hat = gp::gp_predict(*st.gp, cand).mean;
        }
        scores = acq::strategy_scores(st.strategy, ctx);

        // (4) selection, with one relaxed retry when the gate empties the pool
        auto sel = acq::select_batch(scores.a, st.batch_size);
        if (sel.empty() && is_qc) {
            m.relaxed = true;
            m.tau *= 0.5;
            scores.a = acq::gate(scores.s, ctx.q_hat, m.tau);
            sel = acq::select_batch(scores.a, st.batch_size);
        }
        m.shortfall = sel.shortfall;
        m.skipped = sel.empty();
        for (auto idx : sel.indices) picked.push_back(idx);

        if (st.keep_log) {
            std::vector<bool> chosen(st.pool.size(), false);
            for (auto idx : picked) chosen[idx] = true;
            for (std::size_t i = 0; i < st.pool.size(); ++i) {
                acq::AcquisitionRecord r;
                r.candidate = st.pool[i];
                if (scores.components) {
                    r.e_hat = scores.components->predicted_error[i];
                    r.d = scores.components->distance[i];
                    r.r = scores.components->representativeness[i];
                }
                r.s = scores.s[i];
                if (is_qc) r.q_hat = ctx.q_hat[i];
                r.a = scores.a[i];
                r.selected = chosen[i];
                const auto& smp = ds.samples[r.candidate];
                st.log.push_back({step, smp.row, smp.col, r});
            }
        }
    }

    // (5) measurement
    std::vector<bool> taken(st.pool.size(), false);
    for (auto idx : picked) {
        const std::size_t id = st.pool[idx];
        st.instrument->measure(id);
        st.measured.push_back(id);
        m.batch_ids.push_back(id);
        taken[idx] = true;
        st.retained.insert(std::upper_bound(st.retained.begin(), st.retained.end(), id), id);
    }

    // (6) evaluation on what is left of the pool
    std::vector<std::size_t> remaining_cols, remaining_ids;
    for (std::size_t i = 0; i < st.pool.size(); ++i) {
        if (!taken[i]) {
            remaining_cols.push_back(i);
            remaining_ids.push_back(st.pool[i]);
        }
    }
    if (!remaining_ids.empty()) {
        const Matrix pred_raw = gather(pool_fwd.output, remaining_cols);
        const auto raw_err = net::per_sample_mse(pred_raw, gather(data->targets, remaining_ids));
        Matrix pred_clean;
        if (cfg.task == Task::Im2Spec) {
            pred_clean = pred_raw;
        } else {
            pred_clean = net::forward_batch(model, gather(data->clean_inputs, remaining_ids)).output;
        }
        const auto clean_err = net::per_sample_mse(pred_clean, gather(data->clean_targets, remaining_ids));
        m.mse_raw = stats::mean(raw_err);
        m.mse_clean = stats::mean(clean_err);
    } else {
        m.mse_raw = m.mse_clean = std::numeric_limits<double>::quiet_NaN();
    }
    st.pool = std::move(remaining_ids);

    const auto& next_train = st.retained.empty() ? st.measured : st.retained;
    m.noisy_ratio = noisy_ratio(next_train, ds);
    m.retained = st.retained.size();
    m.acquired = st.measured.size();
    return m;
}

TrialResult run_trial(const bench::Dataset& ds, const ExperimentConfig& cfg, acq::Strategy strategy, int trial) {
    TrialResult r;
    r.strategy = strategy;
    r.trial = trial;
    r.trial_seed = trial_seed(cfg, trial);
    try {
        const auto split = trial_split(ds, r.trial_seed);
        r.seed_ids = split.seed_ids;
        auto st = init_trial(ds, cfg, strategy, r.trial_seed, split);
        st.keep_log = cfg.log_trials < 0 || trial < cfg.log_trials;
        for (int step = 1; step <= cfg.n_steps; ++step) r.steps.push_back(run_step(st, step));
        r.log = std::move(st.log);
        r.gp_calls = st.gp_calls;
        r.error_model_calls = st.error_model_calls;
    } catch (const Error& e) {
        r.error = e.what();
    }
    return r;
}

bool ExperimentResult::any_aborted() const {
    return std::any_of(trials.begin(), trials.end(), [](const TrialResult& t) { return !t.error.empty(); });
}

std::vector<double> step_values(const std::vector<TrialResult>& trials, acq::Strategy s, int step,
                                double StepMetrics::*field) {
    std::vector<double> out;
    for (const auto& t : trials) {
        if (t.strategy != s || !t.error.empty() || t.steps.size() < static_cast<std::size_t>(step)) continue;
        out.push_back(t.steps[static_cast<std::size_t>(step - 1)].*field);
    }
    return out;
}

std::map<acq::Strategy, std::vector<StepAggregate>> aggregate(const std::vector<TrialResult>& trials, int n_steps) {
    std::map<acq::Strategy, std::vector<StepAggregate>> out;
    std::vector<acq::Strategy> present;
    for (const auto& t : trials) {
        if (std::find(present.begin(), present.end(), t.strategy) == present.end()) present.push_back(t.strategy);
    }
    auto summarize = [](const std::vector<double>& v) {
        MeanSem ms;
        if (v.empty()) {
            ms.mean = ms.sem = std::numeric_limits<double>::quiet_NaN();
        } else {
            ms.mean = stats::mean(v);
            ms.sem = stats::sem(v);
        }
        return ms;
    };
    for (auto s : present) {
        auto& rows = out[s];
        for (int step = 1; step <= n_steps; ++step) {
            StepAggregate a;
            a.step = step;
            a.mse_clean = summarize(step_values(trials, s, step, &StepMetrics::mse_clean));
            a.mse_raw = summarize(step_values(trials, s, step, &StepMetrics::mse_raw));
            a.noisy_ratio = summarize(step_values(trials, s, step, &StepMetrics::noisy_ratio));
            std::vector<double> kept;
            for (const auto& t : trials) {
                if (t.strategy != s || !t.error.empty() || t.steps.size() < static_cast<std::size_t>(step)) continue;
                kept.push_back(static_cast<double>(t.steps[static_cast<std::size_t>(step - 1)].retained));
            }
            a.retained = summarize(kept);
            rows.push_back(a);
        }
    }
    return out;
}

std::vector<Comparison> compare_final_steps(const std::vector<TrialResult>& trials, int n_steps, int last_steps) {
    std::vector<acq::Strategy> present;
    for (const auto& t : trials) {
        if (std::find(present.begin(), present.end(), t.strategy) == present.end()) present.push_back(t.strategy);
    }
    std::vector<Comparison> out;
    if (present.size() < 2) return out;
    const acq::Strategy ref = std::find(present.begin(), present.end(), acq::Strategy::ActiveQC) != present.end()
                                  ? acq::Strategy::ActiveQC
                                  : present.front();
    for (auto other : present) {
        if (other == ref) continue;
        for (int step = std::max(1, n_steps - last_steps + 1); step <= n_steps; ++step) {
            const auto a = step_values(trials, ref, step, &StepMetrics::mse_clean);
            const auto b = step_values(trials, other, step, &StepMetrics::mse_clean);
            if (a.size() < 2 || b.size() < 2) continue;
            Comparison c{ref, other, step, stats::mean(a), stats::mean(b), stats::welch_t_test(a, b)};
            out.push_back(c);
        }
    }
    return out;
}

ExperimentResult run_experiment(const bench::Dataset& ds, const ExperimentConfig& cfg, int jobs) {
    cfg.validate();
    ExperimentResult res;
    res.config = cfg;
    const std::size_t n_trials = static_cast<std::size_t>(cfg.n_trials);
    const std::size_t n_jobs = cfg.strategies.size() * n_trials;
    res.trials.resize(n_jobs);
    const auto keep = task_data(ds, cfg.task);
    parallel_for(n_jobs, jobs, [&](std::size_t j) {
        res.trials[j] = run_trial(ds, cfg, cfg.strategies[j / n_trials], static_cast<int>(j % n_trials));
    });
    res.aggregates = aggregate(res.trials, cfg.n_steps);
    res.comparisons = compare_final_steps(res.trials, cfg.n_steps);
    return res;
}

MapSet export_maps(const bench::Dataset& ds, const TrialResult& trial, int step) {
    if (step < 1 || static_cast<std::size_t>(step) > trial.steps.size()) {
        throw ContractViolation("export_maps: step " + std::to_string(step) + " was not run");
    }
    std::vector<std::size_t> prior(trial.seed_ids);
    for (int s = 1; s < step; ++s) {
        const auto& b = trial.steps[static_cast<std::size_t>(s - 1)].batch_ids;
        prior.insert(prior.end(), b.begin(), b.end());
    }
    std::vector<bool> corrupted;
    for (const auto& s : ds.samples) corrupted.push_back(s.corrupted);
    std::vector<LogEntry> entries;
    for (const auto& e : trial.log) {
        if (e.step == step) entries.push_back(e);
    }
    const auto& sm = trial.steps[static_cast<std::size_t>(step - 1)];
    std::vector<double> q_grid;
    if (sm.gp_hyper) q_grid = quality_grid(ds, prior, *sm.gp_hyper);
    return build_maps(ds.centers_per_side(), trial.strategy, entries, prior, sm.batch_ids, corrupted,
                      q_grid.empty() ? nullptr : &q_grid);
}

std::vector<double> quality_grid(const bench::Dataset& ds, std::span<const std::size_t> measured,
                                 const gp::GPHyperparams& hyper) {
    std::vector<gp::Coord> coords;
    std::vector<double> q;
    for (auto id : measured) {
        coords.push_back(bench::normalized_coord(ds, ds.samples.at(id)));
        q.push_back(std::clamp(ds.samples[id].quality, 0.0, 1.0));
    }
    std::vector<gp::Coord> all;
    for (const auto& s : ds.samples) all.push_back(bench::normalized_coord(ds, s));
    return gp::gp_predict(gp::gp_fit(coords, q, hyper), all).mean;
}

MapSet build_maps(int side, acq::Strategy strategy, std::span<const LogEntry> entries,
                  std::span<const std::size_t> prior_measured, std::span<const std::size_t> batch,
                  const std::vector<bool>& corrupted, const std::vector<double>* q_hat_grid) {
    const auto n = static_cast<std::size_t>(side * side);
    if (corrupted.size() != n) throw ContractViolation("build_maps: flag count does not match the grid");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    MapSet maps;
    maps.side = side;
    std::vector<double> loc(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) loc[i] = corrupted[i] ? 3.0 : 0.0;
    for (auto id : prior_measured) loc.at(id) = 1.0;
    for (auto id : batch) loc.at(id) = 2.0;
    maps.grids["locations"] = std::move(loc);
    if (entries.empty()) return maps;

    const bool scored = strategy != acq::Strategy::Random;
    auto put = [&](const std::string& name, auto getter) {
        std::vector<double> g(n, nan);
        for (const auto& e : entries) g.at(e.record.candidate) = getter(e.record);
        maps.grids[name] = std::move(g);
    };
    put("a", [](const acq::AcquisitionRecord& r) { return r.a; });
    if (scored) {
        put("e_hat", [](const acq::AcquisitionRecord& r) { return r.e_hat; });
        put("d", [](const acq::AcquisitionRecord& r) { return r.d; });
        put("r", [](const acq::AcquisitionRecord& r) { return r.r; });
    }
    if (q_hat_grid != nullptr) {
        if (q_hat_grid->size() != n) throw ContractViolation("build_maps: quality grid size mismatch");
        maps.grids["q_hat"] = *q_hat_grid;
    }
    return maps;
}

} // namespace aqc::harness
