#pragma once
// Synthetic paired image/spectrum benchmark: a smooth latent field, local
// SHO-based band-excitation spectra with a hysteretic amplitude, spatially
// localized spectral corruption, normalization, splits and a virtual instrument.

#include "activeqc/gp.hpp"
#include "activeqc/sho.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace aqc::bench {

struct GroundTruthField {
    int size = 0;
    std::vector<double> values; // row-major size x size

    double at(int row, int col) const { return values[static_cast<std::size_t>(row * size + col)]; }
};

// Corruption rectangle expressed as fractions of the grid edge; a sample is
// affected when its centre pixel lies inside [row_begin, row_end) x [col_begin, col_end).
struct NoiseConfig {
    double row_begin = 0.0;
    double row_end = 0.53;
    double col_begin = 0.45;
    double col_end = 1.0;
    double sigma_scale = 2.0;
    double target_fraction = 0.30;
    double tolerance = 0.02;
};

struct ShoSynthConfig {
    int n_dc = 64;
    int n_freq = 32;
    double center_hz = 350e3;
    double band_fraction = 0.15; // grid covers centre * (1 +- band_fraction)
    double v_max = 10.0;
    double baseline_noise = 0.01; // x per-sweep signal RMS
    double q_base = 4.0;          // quality factor at zero field
    double q_slope = 4.0;         // added at full field
};

struct BenchConfig {
    int grid = 50;
    int patch = 16;
    int stride = 1;
    int loop_length = 256;
    int target_side = 4; // Spec2Im output is the central target_side x target_side crop
    int n_blobs = 40;
    double blob_width_min = 3.0;
    double blob_width_max = 6.0;
    ShoSynthConfig sho;
    NoiseConfig noise;
    std::uint64_t seed = 1234;

    void validate() const;
};

struct SampleRecord {
    std::size_t id = 0;
    int row = 0; // centre pixel
    int col = 0;
    int top = 0; // patch origin
    int left = 0;
    std::vector<double> patch;      // patch x patch, row-major
    std::vector<double> loop;       // as measured (possibly corrupted)
    std::vector<double> clean_loop; // benchmark-only ground truth
    sho::RawBESpectrum raw;
    double quality = 0.0;  // mean R^2 of `raw`
    bool corrupted = false; // benchmark-only flag
};

struct Normalization {
    double patch_min = 0.0;
    double patch_max = 1.0;
    double loop_min = 0.0;
    double loop_max = 1.0;
};

struct DatasetSplit {
    std::vector<std::size_t> seed_ids;
    std::vector<std::size_t> val_ids;
    std::vector<std::size_t> pool_ids;
};

struct Dataset {
    BenchConfig config;
    GroundTruthField field;
    std::vector<SampleRecord> samples;
    Normalization norm;

    std::size_t size() const noexcept { return samples.size(); }
    int centers_per_side() const { return (config.grid - config.patch) / config.stride + 1; }
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Sum of `n_blobs` seeded Gaussian blobs (widths uniform in [width_min, width_max]
// pixels, amplitudes uniform in [-1, 1]) rescaled to [0, 1].
GroundTruthField generate_ground_truth(int grid, std::uint64_t seed, int n_blobs = 8, double width_min = 4.0,
                                       double width_max = 9.0);

sho::FrequencyGrid frequency_grid(const ShoSynthConfig& cfg);
std::vector<double> bias_waveform(const ShoSynthConfig& cfg);

// Clean (baseline-noise only) spectrum for the patch whose centre is (row, col).
sho::RawBESpectrum synth_raw_spectrum(const GroundTruthField& field, int row, int col, int patch,
                                      const ShoSynthConfig& cfg, std::uint64_t seed);

// Noiseless per-bias SHO parameters the generator uses at (row, col).
std::vector<sho::SHOParams> synth_parameters(const GroundTruthField& field, int row, int col, int patch,
                                             const ShoSynthConfig& cfg);

// One sample per patch position (stride `cfg.stride`), loops taken at patch centres. `jobs` worker threads.
std::vector<SampleRecord> extract_dataset(const GroundTruthField& field, const BenchConfig& cfg, int jobs = 1);

bool in_noise_region(const NoiseConfig& cfg, int grid, int row, int col);

// Adds complex Gaussian noise to the sweeps of every sample in the region and
// re-derives loop and quality. Throws RegionConfigError when the affected
// fraction misses target_fraction by more than max(tolerance, 1/sqrt(N)),
// the second term being one row of centres on a square grid.
void inject_noise(std::vector<SampleRecord>& samples, const NoiseConfig& cfg, int grid, int loop_length,
                  std::uint64_t seed, int jobs = 1);

// Global min-max for patches and (separately) loops; clean loops share the loop constants.
Normalization normalize_dataset(std::vector<SampleRecord>& samples);
void denormalize_dataset(std::vector<SampleRecord>& samples, const Normalization& norm);

DatasetSplit make_split(std::size_t n, std::uint64_t seed, double seed_frac = 0.01, double val_frac = 0.09,
                        double pool_frac = 0.90);

// Full pipeline: field, extraction, corruption, normalization.
Dataset build_dataset(const BenchConfig& cfg, int jobs = 1);

// Central side x side crop of a square row-major patch (the pixels under the probe).
std::vector<double> center_crop(std::span<const double> patch, int patch_side, int side);

gp::Coord normalized_coord(const Dataset& ds, const SampleRecord& s);

struct Measurement {
    const std::vector<double>* patch;
    const std::vector<double>* loop;
    const sho::RawBESpectrum* raw;
    double quality;
};

// Serves stored records through the interface a hardware backend would implement.
class VirtualInstrument {
public:
    explicit VirtualInstrument(const Dataset& ds);

    // Throws AlreadyMeasuredError on a repeat request for the same id.
    Measurement measure(std::size_t id);
    bool measured(std::size_t id) const { return measured_.at(id); }
    std::size_t measurement_count() const noexcept { return count_; }

private:
    const Dataset* ds_;
    std::vector<bool> measured_;
    std::size_t count_ = 0;
};

} // namespace aqc::bench
