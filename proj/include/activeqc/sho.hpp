#pragma once
// Complex simple-harmonic-oscillator (SHO) model for band-excitation sweeps:
// evaluation, bounded Levenberg-Marquardt fitting, per-location mean-R^2
// quality and hysteresis-loop assembly.

#include <complex>
#include <optional>
#include <span>
#include <vector>

namespace aqc::sho {

using cplx = std::complex<double>;

// Angular frequencies (rad/s), strictly increasing and positive.
class FrequencyGrid {
public:
    FrequencyGrid() = default;
    explicit FrequencyGrid(std::vector<double> freqs);

    // n points evenly spaced on [lo, hi].
    static FrequencyGrid linspace(double lo, double hi, std::size_t n);

    std::span<const double> freqs() const noexcept { return freqs_; }
    std::size_t size() const noexcept { return freqs_.size(); }
    double front() const { return freqs_.front(); }
    double back() const { return freqs_.back(); }

private:
    std::vector<double> freqs_;
};

struct SHOParams {
    double amplitude = 1.0;      // A
    double resonance = 1.0;      // omega_0, rad/s
    double quality_factor = 1.0; // Q
    double phase = 0.0;          // phi, rad
};

// Closed box for fitted parameters. Phase is periodic and wrapped into
// [-pi, pi] rather than clipped.
struct SHOBounds {
    double amplitude_lo = 0.0;
    double amplitude_hi = 0.0;
    double resonance_lo = 0.0;
    double resonance_hi = 0.0;
    double q_lo = 1.0;
    double q_hi = 1e4;

    // A in (0, 10 max|y|], omega_0 within the band +-50% of its width, Q in [1, 1e4].
    static SHOBounds defaults_for(std::span<const cplx> response, const FrequencyGrid& grid);
};

struct BiasSweep {
    double dc_bias = 0.0;
    std::vector<cplx> response;
};

struct RawBESpectrum {
    FrequencyGrid grid;
    std::vector<BiasSweep> sweeps;

    std::size_t n_dc() const noexcept { return sweeps.size(); }
    // Throws ContractViolation when sweep lengths, finiteness or the closed-loop
    // bias condition (|first - last| <= tol) do not hold.
    void validate(double bias_tol = 1e-6) const;
};

struct QualityScore {
    std::vector<double> per_bias_r2;
    double q = 0.0;
};

struct FitOptions {
    int max_iter = 200;
    double lambda0 = 1e-3;
    double rel_tol = 1e-10;
};

struct ShoFit {
    SHOParams params;
    double r2 = 0.0;
    bool converged = false;
    bool degenerate = false;
    int iterations = 0;
};

cplx sho_response(const SHOParams& p, double omega);

std::vector<cplx> sho_curve(const SHOParams& p, const FrequencyGrid& grid);

// 1 - SS_res/SS_tot over real and imaginary channels stacked into one series.
// Throws DegenerateSignalError when SS_tot is below machine tolerance.
double r_squared(std::span<const cplx> observed, std::span<const cplx> fitted);

// Heuristic starting point: peak frequency, FWHM-based Q (fallback 50),
// A = peak/Q and phase from the peak value.
SHOParams initial_guess(std::span<const cplx> response, const FrequencyGrid& grid);

// Bounded LM on stacked residuals. A constant response throws
// DegenerateSignalError. Non-convergence returns the best iterate with
// converged == false.
ShoFit fit_sho(std::span<const cplx> response, const FrequencyGrid& grid,
               const std::optional<SHOBounds>& bounds = std::nullopt,
               const std::optional<SHOParams>& init = std::nullopt,
               const FitOptions& opts = {});

inline ShoFit fit_sho(const BiasSweep& sweep, const FrequencyGrid& grid,
                      const std::optional<SHOBounds>& bounds = std::nullopt,
                      const std::optional<SHOParams>& init = std::nullopt,
                      const FitOptions& opts = {}) {
    return fit_sho(std::span<const cplx>(sweep.response), grid, bounds, init, opts);
}

// Independent per-sweep fits; degenerate sweeps are kept with degenerate == true and r2 == 0.
std::vector<ShoFit> fit_spectrum(const RawBESpectrum& spectrum, const FitOptions& opts = {});

QualityScore quality_score(std::span<const ShoFit> fits);
QualityScore quality_score(const RawBESpectrum& spectrum);

// Mixed response A cos(phi) of the valid fits in bias order, linearly resampled to `length`.
std::vector<double> loop_from_fits(std::span<const ShoFit> fits, std::size_t length = 256);
std::vector<double> loop_from_fits(const RawBESpectrum& spectrum, std::size_t length = 256);

// Piecewise-linear resampling of `values` (placed at integer positions) onto
// `length` evenly spaced positions spanning the same range.
std::vector<double> resample_linear(std::span<const double> positions,
                                    std::span<const double> values, double last_position,
                                    std::size_t length);

double wrap_phase(double phi);

} // namespace aqc::sho
