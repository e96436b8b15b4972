#include "activeqc/sho.hpp"

#include "activeqc/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace aqc::sho {

namespace {

constexpr double kPi = std::numbers::pi;

using Vec4 = Eigen::Matrix<double, 4, 1>;
using Mat4 = Eigen::Matrix<double, 4, 4>;

Vec4 to_vec(const SHOParams& p) {
    return {p.amplitude, p.resonance, p.quality_factor, p.phase};
}

SHOParams from_vec(const Vec4& v) {
    return {v[0], v[1], v[2], v[3]};
}

Vec4 project(Vec4 v, const SHOBounds& b) {
    v[0] = std::clamp(v[0], b.amplitude_lo, b.amplitude_hi);
    v[1] = std::clamp(v[1], b.resonance_lo, b.resonance_hi);
    v[2] = std::clamp(v[2], b.q_lo, b.q_hi);
    v[3] = wrap_phase(v[3]);
    return v;
}

double cost_of(const Vec4& v, std::span<const cplx> y, std::span<const double> w) {
    const SHOParams p = from_vec(v);
    double c = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        c += std::norm(sho_response(p, w[i]) - y[i]);
    }
    return c;
}

// Normal equations of the stacked real/imag residual vector.
double normal_equations(const Vec4& v, std::span<const cplx> y, std::span<const double> w,
                        Mat4& jtj, Vec4& jtr) {
    jtj.setZero();
    jtr.setZero();
    const double a = v[0], w0 = v[1], q = v[2], phi = v[3];
    const cplx rot = std::polar(1.0, phi);
    const cplx i1(0.0, 1.0);
    double cost = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
        const double om = w[k];
        const cplx den(om * om - w0 * w0, -om * w0 / q);
        const cplx base = rot * (w0 * w0) / den; // dH/dA
        const cplx h = a * base;
        const cplx res = h - y[k];
        cost += std::norm(res);

        const cplx d_den_dw0(-2.0 * w0, -om / q);
        const cplx d_den_dq(0.0, om * w0 / (q * q));
        const cplx dh[4] = {
            base,
            a * rot * (2.0 * w0 / den - w0 * w0 * d_den_dw0 / (den * den)),
            -h * d_den_dq / den,
            i1 * h,
        };
        for (int r = 0; r < 4; ++r) {
            jtr[r] += dh[r].real() * res.real() + dh[r].imag() * res.imag();
            for (int c = r; c < 4; ++c) {
                jtj(r, c) += dh[r].real() * dh[c].real() + dh[r].imag() * dh[c].imag();
            }
        }
    }
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < r; ++c) jtj(r, c) = jtj(c, r);
    }
    return cost;
}

void require_degenerate_free(std::span<const cplx> y) {
    double mre = 0.0, mim = 0.0, sumsq = 0.0;
    for (const auto& v : y) {
        mre += v.real();
        mim += v.imag();
        sumsq += std::norm(v);
    }
    mre /= static_cast<double>(y.size());
    mim /= static_cast<double>(y.size());
    double ss_tot = 0.0;
    for (const auto& v : y) ss_tot += std::norm(v - cplx(mre, mim));
    if (!(ss_tot > 1e-28 * sumsq) || ss_tot == 0.0) {
        throw DegenerateSignalError("sweep has zero variance");
    }
}

} // namespace

double wrap_phase(double phi) {
    if (phi >= -kPi && phi <= kPi) return phi;
    double r = std::remainder(phi, 2.0 * kPi);
    return r;
}

FrequencyGrid::FrequencyGrid(std::vector<double> freqs) : freqs_(std::move(freqs)) {
    if (freqs_.size() < 6) throw ContractViolation("frequency grid needs at least 6 points");
    for (std::size_t i = 0; i < freqs_.size(); ++i) {
        if (!(freqs_[i] > 0.0) || !std::isfinite(freqs_[i])) {
            throw ContractViolation("frequencies must be finite and positive");
        }
        if (i > 0 && !(freqs_[i] > freqs_[i - 1])) {
            throw ContractViolation("frequencies must be strictly increasing");
        }
    }
}

FrequencyGrid FrequencyGrid::linspace(double lo, double hi, std::size_t n) {
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    return FrequencyGrid(std::move(f));
}

SHOBounds SHOBounds::defaults_for(std::span<const cplx> response, const FrequencyGrid& grid) {
    double peak = 0.0;
    for (const auto& v : response) peak = std::max(peak, std::abs(v));
    const double span = grid.back() - grid.front();
    SHOBounds b;
    b.amplitude_lo = std::max(peak, std::numeric_limits<double>::min()) * 1e-12;
    b.amplitude_hi = std::max(10.0 * peak, b.amplitude_lo);
    b.resonance_lo = std::max(grid.front() - 0.5 * span, 1e-3 * grid.front());
    b.resonance_hi = grid.back() + 0.5 * span;
    b.q_lo = 1.0;
    b.q_hi = 1e4;
    return b;
}

void RawBESpectrum::validate(double bias_tol) const {
    if (sweeps.size() < 2) throw ContractViolation("spectrum needs at least 2 bias points");
    for (const auto& s : sweeps) {
        if (s.response.size() != grid.size()) {
            throw ContractViolation("sweep length differs from frequency grid");
        }
        if (!std::isfinite(s.dc_bias)) throw ContractViolation("non-finite bias");
        for (const auto& v : s.response) {
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
                throw ContractViolation("non-finite response value");
            }
        }
    }
    if (std::abs(sweeps.front().dc_bias - sweeps.back().dc_bias) > bias_tol) {
        throw ContractViolation("bias waveform is not a closed loop");
    }
}

cplx sho_response(const SHOParams& p, double omega) {
    const double w0 = p.resonance;
    const cplx den(omega * omega - w0 * w0, -omega * w0 / p.quality_factor);
    return p.amplitude * std::polar(1.0, p.phase) * (w0 * w0) / den;
}

std::vector<cplx> sho_curve(const SHOParams& p, const FrequencyGrid& grid) {
    std::vector<cplx> out;
    out.reserve(grid.size());
    for (double w : grid.freqs()) out.push_back(sho_response(p, w));
    return out;
}

double r_squared(std::span<const cplx> observed, std::span<const cplx> fitted) {
    if (observed.size() != fitted.size() || observed.size() < 2) {
        throw ContractViolation("r_squared needs equal-length series of at least 2 points");
    }
    // one mean over the concatenated re/im vector
    const auto n = 2.0 * static_cast<double>(observed.size());
    double m = 0.0, sumsq = 0.0;
    for (const auto& v : observed) {
        m += v.real() + v.imag();
        sumsq += std::norm(v);
    }
    m /= n;
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        ss_res += std::norm(observed[i] - fitted[i]);
        ss_tot += std::norm(observed[i] - cplx(m, m));
    }
    if (ss_tot == 0.0 || !(ss_tot > 1e-28 * sumsq)) {
        throw DegenerateSignalError("observed signal is constant");
    }
    return 1.0 - ss_res / ss_tot;
}

SHOParams initial_guess(std::span<const cplx> y, const FrequencyGrid& grid) {
    const auto w = grid.freqs();
    std::size_t ip = 0;
    double peak = -1.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double m = std::abs(y[i]);
        if (m > peak) {
            peak = m;
            ip = i;
        }
    }
    const double half = peak / std::sqrt(2.0);
    std::optional<double> left, right;
    for (std::size_t i = ip; i > 0; --i) {
        const double m0 = std::abs(y[i - 1]), m1 = std::abs(y[i]);
        if (m0 < half) {
            left = w[i - 1] + (half - m0) / (m1 - m0) * (w[i] - w[i - 1]);
            break;
        }
    }
    for (std::size_t i = ip; i + 1 < y.size(); ++i) {
        const double m0 = std::abs(y[i]), m1 = std::abs(y[i + 1]);
        if (m1 < half) {
            right = w[i] + (m0 - half) / (m0 - m1) * (w[i + 1] - w[i]);
            break;
        }
    }
    double fwhm = 0.0;
    if (left && right) {
        fwhm = *right - *left;
    } else if (left) {
        fwhm = 2.0 * (w[ip] - *left);
    } else if (right) {
        fwhm = 2.0 * (*right - w[ip]);
    }
    double q = fwhm > 0.0 ? w[ip] / fwhm : 50.0;
    if (!std::isfinite(q) || q < 1.0) q = 50.0;

    SHOParams p;
    p.resonance = w[ip];
    p.quality_factor = q;
    p.amplitude = peak / q;
    p.phase = wrap_phase(std::arg(y[ip]) - kPi / 2.0);
    return p;
}

ShoFit fit_sho(std::span<const cplx> y, const FrequencyGrid& grid,
               const std::optional<SHOBounds>& bounds, const std::optional<SHOParams>& init,
               const FitOptions& opts) {
    if (y.size() != grid.size()) throw ContractViolation("sweep length differs from grid");
    for (const auto& v : y) {
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
            throw ContractViolation("non-finite response value");
        }
    }
    require_degenerate_free(y);

    const SHOBounds b = bounds ? *bounds : SHOBounds::defaults_for(y, grid);
    const auto w = grid.freqs();
    Vec4 p = project(to_vec(init ? *init : initial_guess(y, grid)), b);

    Mat4 jtj;
    Vec4 jtr;
    double cost = normal_equations(p, y, w, jtj, jtr);
    double lambda = opts.lambda0;

    ShoFit out;
    int it = 0;
    for (; it < opts.max_iter; ++it) {
        if (cost == 0.0) {
            out.converged = true;
            break;
        }
        bool accepted = false;
        bool stalled = false;
        while (!accepted) {
            Mat4 lhs = jtj;
            for (int d = 0; d < 4; ++d) {
                lhs(d, d) += lambda * std::max(jtj(d, d), 1e-300);
            }
            const Vec4 step = lhs.ldlt().solve(-jtr);
            const Vec4 trial = project(p + step, b);
            const double trial_cost = step.allFinite() ? cost_of(trial, y, w)
                                                       : std::numeric_limits<double>::infinity();
            if (trial_cost < cost) {
                const double rel = (cost - trial_cost) / cost;
                p = trial;
                lambda = std::max(lambda / 10.0, 1e-15);
                cost = normal_equations(p, y, w, jtj, jtr);
                accepted = true;
                if (rel < opts.rel_tol) stalled = true;
            } else {
                lambda *= 10.0;
                if (lambda > 1e16) {
                    stalled = true;
                    break;
                }
            }
        }
        if (stalled) {
            out.converged = true;
            ++it;
            break;
        }
    }
    out.iterations = it;
    out.params = from_vec(p);
    out.r2 = r_squared(y, sho_curve(out.params, grid));
    return out;
}

std::vector<ShoFit> fit_spectrum(const RawBESpectrum& spectrum, const FitOptions& opts) {
    std::vector<ShoFit> fits;
    fits.reserve(spectrum.sweeps.size());
    for (const auto& s : spectrum.sweeps) {
        try {
            fits.push_back(fit_sho(s, spectrum.grid, std::nullopt, std::nullopt, opts));
        } catch (const DegenerateSignalError&) {
            ShoFit bad;
            bad.degenerate = true;
            bad.r2 = 0.0;
            fits.push_back(bad);
        }
    }
    return fits;
}

QualityScore quality_score(std::span<const ShoFit> fits) {
    if (fits.empty()) throw ContractViolation("quality_score needs at least one fit");
    QualityScore qs;
    qs.per_bias_r2.reserve(fits.size());
    double sum = 0.0;
    for (const auto& f : fits) {
        const double r2 = f.degenerate ? 0.0 : f.r2;
        qs.per_bias_r2.push_back(r2);
        sum += r2;
    }
    qs.q = sum / static_cast<double>(fits.size());
    return qs;
}

QualityScore quality_score(const RawBESpectrum& spectrum) {
    const auto fits = fit_spectrum(spectrum);
    return quality_score(fits);
}

std::vector<double> resample_linear(std::span<const double> positions,
                                    std::span<const double> values, double last_position,
                                    std::size_t length) {
    if (positions.size() != values.size() || positions.empty() || length < 2) {
        throw ContractViolation("resample_linear: bad input sizes");
    }
    std::vector<double> out(length);
    std::size_t seg = 0;
    for (std::size_t k = 0; k < length; ++k) {
        const double x = static_cast<double>(k) * last_position / static_cast<double>(length - 1);
        if (x <= positions.front()) {
            out[k] = values.front();
            continue;
        }
        if (x >= positions.back()) {
            out[k] = values.back();
            continue;
        }
        while (seg + 1 < positions.size() && positions[seg + 1] < x) ++seg;
        const double x0 = positions[seg], x1 = positions[seg + 1];
        if (x == x1) {
            out[k] = values[seg + 1];
            continue;
        }
        const double t = (x - x0) / (x1 - x0);
        out[k] = values[seg] + t * (values[seg + 1] - values[seg]);
    }
    return out;
}

std::vector<double> loop_from_fits(std::span<const ShoFit> fits, std::size_t length) {
    std::vector<double> pos, val;
    for (std::size_t j = 0; j < fits.size(); ++j) {
        if (fits[j].degenerate) continue;
        pos.push_back(static_cast<double>(j));
        val.push_back(fits[j].params.amplitude * std::cos(fits[j].params.phase));
    }
    if (pos.size() < 2) throw InsufficientFitsError("fewer than 2 valid SHO fits");
    return resample_linear(pos, val, static_cast<double>(fits.size() - 1), length);
}

std::vector<double> loop_from_fits(const RawBESpectrum& spectrum, std::size_t length) {
    const auto fits = fit_spectrum(spectrum);
    return loop_from_fits(fits, length);
}

} // namespace aqc::sho
