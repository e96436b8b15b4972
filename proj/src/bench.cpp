#include "activeqc/bench.hpp"

#include "activeqc/error.hpp"
#include "activeqc/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace aqc::bench {

namespace {

struct LocalState {
    double level = 0.0;   // mean field under the probe (central patch/4 square)
    double mean = 0.0;    // mean over the whole patch
    double imprint = 0.0; // left-minus-right mean across the patch
    double tilt = 0.0;    // top-minus-bottom mean across the patch
};

double window_mean(const GroundTruthField& f, int r0, int r1, int c0, int c1) {
    r0 = std::max(r0, 0);
    c0 = std::max(c0, 0);
    r1 = std::min(r1, f.size);
    c1 = std::min(c1, f.size);
    double sum = 0.0;
    int n = 0;
    for (int r = r0; r < r1; ++r) {
        for (int c = c0; c < c1; ++c) {
            sum += f.at(r, c);
            ++n;
        }
    }
    return n > 0 ? sum / n : 0.0;
}

LocalState local_state(const GroundTruthField& f, int row, int col, int patch) {
    const int e = std::max(1, patch / 8);
    const int q = std::max(1, patch / 4);
    const int h = std::max(1, patch / 2);
    LocalState s;
    s.level = window_mean(f, row - e, row + e, col - e, col + e);
    s.mean = window_mean(f, row - h, row + h, col - h, col + h);
    s.imprint = window_mean(f, row - q, row + q, col - q, col) - window_mean(f, row - q, row + q, col, col + q);
    s.tilt = window_mean(f, row - q, row, col - q, col + q) - window_mean(f, row, row + q, col - q, col + q);
    return s;
}

bool rising_branch(std::size_t j, std::size_t n) {
    const double t = static_cast<double>(j) / static_cast<double>(n - 1);
    return t < 0.25 || t >= 0.75;
}

double sweep_rms(const std::vector<sho::cplx>& v) {
    double acc = 0.0;
    for (const auto& x : v) acc += std::norm(x);
    return std::sqrt(acc / static_cast<double>(v.size()));
}

// Complex noise with E|n|^2 = sigma^2.
void add_complex_noise(std::vector<sho::cplx>& v, double sigma, std::mt19937_64& rng) {
    if (sigma <= 0.0) return;
    std::normal_distribution<double> n(0.0, sigma / std::numbers::sqrt2);
    for (auto& x : v) {
        const double re = n(rng);
        const double im = n(rng);
        x += sho::cplx(re, im);
    }
}

void derive_loop_and_quality(SampleRecord& s, int loop_length) {
    const auto fits = sho::fit_spectrum(s.raw);
    s.loop = sho::loop_from_fits(fits, static_cast<std::size_t>(loop_length));
    s.quality = sho::quality_score(fits).q;
}

} // namespace

void BenchConfig::validate() const {
    if (patch <= 0 || grid < patch) throw ConfigError("grid must be at least the patch size");
    if (stride <= 0) throw ConfigError("stride must be positive");
    if (loop_length < 2) throw ConfigError("loop length must be >= 2");
    if (target_side <= 0 || target_side > patch || (patch - target_side) % 2 != 0)
        throw ConfigError("target side must fit the patch with an even margin");
    if (sho.n_dc < 2 || sho.n_freq < 6) throw ConfigError("need >= 2 bias points and >= 6 frequencies");
    if (!(sho.band_fraction > 0.0 && sho.band_fraction < 1.0)) throw ConfigError("band fraction must be in (0, 1)");
    if (!(noise.sigma_scale >= 0.0)) throw ConfigError("noise sigma_scale must be >= 0");
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over a combined word
    std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

GroundTruthField generate_ground_truth(int grid, std::uint64_t seed, int n_blobs, double width_min,
                                       double width_max) {
    if (grid <= 0) throw ConfigError("grid must be positive");
    if (!(width_min > 0.0 && width_max >= width_min)) throw ConfigError("blob widths must satisfy 0 < min <= max");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(0.0, static_cast<double>(grid));
    std::uniform_real_distribution<double> width(width_min, width_max);
    std::uniform_real_distribution<double> amp(-1.0, 1.0);
    struct Blob {
        double r, c, w, a;
    };
    std::vector<Blob> blobs;
    for (int b = 0; b < n_blobs; ++b) {
        const double r = pos(rng);
        const double c = pos(rng);
        const double w = width(rng);
        const double a = amp(rng);
        blobs.push_back({r, c, w, a});
    }
    GroundTruthField f;
    f.size = grid;
    f.values.assign(static_cast<std::size_t>(grid * grid), 0.0);
    for (int r = 0; r < grid; ++r) {
        for (int c = 0; c < grid; ++c) {
            double v = 0.0;
            for (const auto& b : blobs) {
                const double dr = r - b.r, dc = c - b.c;
                v += b.a * std::exp(-(dr * dr + dc * dc) / (2.0 * b.w * b.w));
            }
            f.values[static_cast<std::size_t>(r * grid + c)] = v;
        }
    }
    const auto [lo, hi] = std::minmax_element(f.values.begin(), f.values.end());
    const double vlo = *lo, span = *hi - *lo;
    for (auto& v : f.values) v = span > 0.0 ? (v - vlo) / span : 0.0;
    return f;
}

sho::FrequencyGrid frequency_grid(const ShoSynthConfig& cfg) {
    const double wc = 2.0 * std::numbers::pi * cfg.center_hz;
    return sho::FrequencyGrid::linspace(wc * (1.0 - cfg.band_fraction), wc * (1.0 + cfg.band_fraction),
                                        static_cast<std::size_t>(cfg.n_freq));
}

std::vector<double> bias_waveform(const ShoSynthConfig& cfg) {
    // 0 -> +Vmax -> -Vmax -> 0
    const auto n = static_cast<std::size_t>(cfg.n_dc);
    std::vector<double> v(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double t = static_cast<double>(j) / static_cast<double>(n - 1);
        double x;
        if (t < 0.25) {
            x = 4.0 * t;
        } else if (t < 0.75) {
            x = 2.0 - 4.0 * t;
        } else {
            x = 4.0 * t - 4.0;
        }
        v[j] = cfg.v_max * x;
    }
    return v;
}

std::vector<sho::SHOParams> synth_parameters(const GroundTruthField& field, int row, int col, int patch,
                                             const ShoSynthConfig& cfg) {
    const LocalState st = local_state(field, row, col, patch);
    const double saturation = 0.3 + 1.7 * st.mean;
    const double coercive = 1.5 + 4.0 * st.level;
    const double imprint = 3.0 * st.imprint;
    const double offset = 0.6 * st.tilt; // vertical loop shift
    const double width = 1.0;
    const double wc = 2.0 * std::numbers::pi * cfg.center_hz;
    const double q = cfg.q_base + cfg.q_slope * st.level;

    const auto bias = bias_waveform(cfg);
    std::vector<sho::SHOParams> out;
    out.reserve(bias.size());
    for (std::size_t j = 0; j < bias.size(); ++j) {
        const double v = bias[j] - imprint;
        const double pr = offset + (rising_branch(j, bias.size()) ? saturation * std::tanh((v - coercive) / width)
                                                                  : saturation * std::tanh((v + coercive) / width));
        sho::SHOParams p;
        p.amplitude = std::max(std::abs(pr), 0.02 * saturation);
        p.phase = pr >= 0.0 ? 0.0 : std::numbers::pi;
        p.resonance = wc * (1.0 + 0.01 * (st.level - 0.5) + 0.004 * bias[j] / cfg.v_max);
        p.quality_factor = q;
        out.push_back(p);
    }
    return out;
}

sho::RawBESpectrum synth_raw_spectrum(const GroundTruthField& field, int row, int col, int patch,
                                      const ShoSynthConfig& cfg, std::uint64_t seed) {
    if (row < 0 || col < 0 || row >= field.size || col >= field.size) {
        throw ContractViolation("spectrum centre outside the field");
    }
    const auto params = synth_parameters(field, row, col, patch, cfg);
    const auto bias = bias_waveform(cfg);
    sho::RawBESpectrum spec;
    spec.grid = frequency_grid(cfg);
    std::mt19937_64 rng(seed);
    spec.sweeps.reserve(params.size());
    for (std::size_t j = 0; j < params.size(); ++j) {
        sho::BiasSweep s;
        s.dc_bias = bias[j];
        s.response = sho::sho_curve(params[j], spec.grid);
        add_complex_noise(s.response, cfg.baseline_noise * sweep_rms(s.response), rng);
        spec.sweeps.push_back(std::move(s));
    }
    return spec;
}

std::vector<SampleRecord> extract_dataset(const GroundTruthField& field, const BenchConfig& cfg, int jobs) {
    cfg.validate();
    if (field.size != cfg.grid) throw ConfigError("field size does not match the configured grid");
    const int per_side = (cfg.grid - cfg.patch) / cfg.stride + 1;
    const auto n = static_cast<std::size_t>(per_side * per_side);
    std::vector<SampleRecord> samples(n);
    const std::uint64_t spectra_seed = mix_seed(cfg.seed, 2);
    parallel_for(n, jobs, [&](std::size_t id) {
        SampleRecord& s = samples[id];
        s.id = id;
        s.top = static_cast<int>(id / static_cast<std::size_t>(per_side)) * cfg.stride;
        s.left = static_cast<int>(id % static_cast<std::size_t>(per_side)) * cfg.stride;
        s.row = s.top + cfg.patch / 2;
        s.col = s.left + cfg.patch / 2;
        s.patch.resize(static_cast<std::size_t>(cfg.patch * cfg.patch));
        for (int r = 0; r < cfg.patch; ++r) {
            for (int c = 0; c < cfg.patch; ++c) {
                s.patch[static_cast<std::size_t>(r * cfg.patch + c)] = field.at(s.top + r, s.left + c);
            }
        }
        s.raw = synth_raw_spectrum(field, s.row, s.col, cfg.patch, cfg.sho, mix_seed(spectra_seed, id));
        derive_loop_and_quality(s, cfg.loop_length);
        s.clean_loop = s.loop;
    });
    return samples;
}

bool in_noise_region(const NoiseConfig& cfg, int grid, int row, int col) {
    const double g = grid;
    return row >= cfg.row_begin * g && row < cfg.row_end * g && col >= cfg.col_begin * g && col < cfg.col_end * g;
}

void inject_noise(std::vector<SampleRecord>& samples, const NoiseConfig& cfg, int grid, int loop_length,
                  std::uint64_t seed, int jobs) {
    if (samples.empty()) return;
    std::size_t affected = 0;
    for (const auto& s : samples) affected += in_noise_region(cfg, grid, s.row, s.col) ? 1 : 0;
    const double frac = static_cast<double>(affected) / static_cast<double>(samples.size());
    // On coarse grids one row of centres already moves the fraction by more
    // than the tolerance, so the allowed miss never drops below that step.
    const double row_step = 1.0 / std::sqrt(static_cast<double>(samples.size()));
    const double allowed = std::max(cfg.tolerance, row_step);
    if (std::abs(frac - cfg.target_fraction) > allowed + 1e-12) {
        throw RegionConfigError("noise region covers " + std::to_string(frac) + " of samples, target " +
                                std::to_string(cfg.target_fraction) + " +- " + std::to_string(allowed));
    }
    parallel_for(samples.size(), jobs, [&](std::size_t i) {
        SampleRecord& s = samples[i];
        s.corrupted = in_noise_region(cfg, grid, s.row, s.col);
        if (!s.corrupted) return;
        std::mt19937_64 rng(mix_seed(seed, s.id));
        for (auto& sweep : s.raw.sweeps) {
            add_complex_noise(sweep.response, cfg.sigma_scale * sweep_rms(sweep.response), rng);
        }
        derive_loop_and_quality(s, loop_length);
    });
}

Normalization normalize_dataset(std::vector<SampleRecord>& samples) {
    if (samples.empty()) throw ContractViolation("normalize_dataset: no samples");
    Normalization n;
    double pmin = samples[0].patch.at(0), pmax = pmin;
    double lmin = samples[0].loop.at(0), lmax = lmin;
    for (const auto& s : samples) {
        for (double v : s.patch) {
            pmin = std::min(pmin, v);
            pmax = std::max(pmax, v);
        }
        for (double v : s.loop) {
            lmin = std::min(lmin, v);
            lmax = std::max(lmax, v);
        }
    }
    if (!(pmax > pmin)) throw DegenerateNormalizationError("patch values are globally constant");
    if (!(lmax > lmin)) throw DegenerateNormalizationError("loop values are globally constant");
    n = {pmin, pmax, lmin, lmax};
    const double ps = pmax - pmin, ls = lmax - lmin;
    for (auto& s : samples) {
        for (auto& v : s.patch) v = (v - pmin) / ps;
        for (auto& v : s.loop) v = (v - lmin) / ls;
        for (auto& v : s.clean_loop) v = (v - lmin) / ls;
    }
    return n;
}

void denormalize_dataset(std::vector<SampleRecord>& samples, const Normalization& n) {
    const double ps = n.patch_max - n.patch_min, ls = n.loop_max - n.loop_min;
    for (auto& s : samples) {
        for (auto& v : s.patch) v = v * ps + n.patch_min;
        for (auto& v : s.loop) v = v * ls + n.loop_min;
        for (auto& v : s.clean_loop) v = v * ls + n.loop_min;
    }
}

DatasetSplit make_split(std::size_t n, std::uint64_t seed, double seed_frac, double val_frac, double pool_frac) {
    if (n < 3) throw SplitError("need at least 3 samples to split");
    if (std::abs(seed_frac + val_frac + pool_frac - 1.0) > 1e-9 || seed_frac < 0 || val_frac < 0 || pool_frac < 0) {
        throw SplitError("split fractions must be non-negative and sum to 1");
    }
    const auto dn = static_cast<double>(n);
    const std::size_t n_seed = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(seed_frac * dn + 1e-9)));
    const std::size_t n_val = static_cast<std::size_t>(std::floor(val_frac * dn + 1e-9));
    if (n_seed + n_val >= n) throw SplitError("split leaves an empty pool");
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    DatasetSplit s;
    s.seed_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_seed));
    s.val_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_seed),
                     ids.begin() + static_cast<std::ptrdiff_t>(n_seed + n_val));
    s.pool_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_seed + n_val), ids.end());
    return s;
}

Dataset build_dataset(const BenchConfig& cfg, int jobs) {
    cfg.validate();
    Dataset ds;
    ds.config = cfg;
    ds.field = generate_ground_truth(cfg.grid, mix_seed(cfg.seed, 1), cfg.n_blobs, cfg.blob_width_min, cfg.blob_width_max);
    ds.samples = extract_dataset(ds.field, cfg, jobs);
    inject_noise(ds.samples, cfg.noise, cfg.grid, cfg.loop_length, mix_seed(cfg.seed, 3), jobs);
    ds.norm = normalize_dataset(ds.samples);
    return ds;
}

std::vector<double> center_crop(std::span<const double> patch, int patch_side, int side) {
    if (side <= 0 || side > patch_side || (patch_side - side) % 2 != 0 ||
        patch.size() != static_cast<std::size_t>(patch_side * patch_side)) {
        throw ContractViolation("center_crop: incompatible sizes");
    }
    const int off = (patch_side - side) / 2;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(side * side));
    for (int r = off; r < off + side; ++r) {
        for (int c = off; c < off + side; ++c) out.push_back(patch[static_cast<std::size_t>(r * patch_side + c)]);
    }
    return out;
}

gp::Coord normalized_coord(const Dataset& ds, const SampleRecord& s) {
    const double span = ds.config.grid - ds.config.patch;
    if (span <= 0.0) return {0.0, 0.0};
    return {s.top / span, s.left / span};
}

VirtualInstrument::VirtualInstrument(const Dataset& ds) : ds_(&ds), measured_(ds.size(), false) {}

Measurement VirtualInstrument::measure(std::size_t id) {
    if (id >= measured_.size()) throw ContractViolation("measure: unknown location id");
    if (measured_[id]) throw AlreadyMeasuredError("location " + std::to_string(id) + " was already measured");
    measured_[id] = true;
    ++count_;
    const auto& s = ds_->samples[id];
    return {&s.patch, &s.loop, &s.raw, s.quality};
}

} // namespace aqc::bench
