#include <doctest.h>

#include "activeqc/error.hpp"
#include "activeqc/sho.hpp"
#include "activeqc/spectrum_io.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace aqc;
using namespace aqc::sho;

namespace {

FrequencyGrid band(double w0, double frac = 0.15, std::size_t n = 32) {
    return FrequencyGrid::linspace(w0 * (1 - frac), w0 * (1 + frac), n);
}

RawBESpectrum closed_spectrum(const SHOParams& p, int n_dc) {
    RawBESpectrum s;
    s.grid = band(p.resonance);
    for (int j = 0; j < n_dc; ++j) {
        BiasSweep b;
        b.dc_bias = (j == n_dc - 1) ? 0.0 : std::sin(2 * std::numbers::pi * j / (n_dc - 1));
        SHOParams q = p;
        q.amplitude = p.amplitude * (1.0 + 0.1 * j);
        q.phase = (j % 2) ? 0.0 : std::numbers::pi;
        b.response = sho_curve(q, s.grid);
        s.sweeps.push_back(b);
    }
    s.sweeps.front().dc_bias = 0.0;
    return s;
}

} // namespace

TEST_CASE("response at resonance is i*A*Q*exp(i*phi)") {
    SHOParams p{2.0, 1000.0, 50.0, 0.3};
    const cplx h = sho_response(p, 1000.0);
    const cplx expect = cplx(0, 1) * 2.0 * 50.0 * std::polar(1.0, 0.3);
    CHECK(std::abs(h - expect) < 1e-9 * std::abs(expect));
    CHECK(std::abs(h) == doctest::Approx(100.0));
}

TEST_CASE("response far below resonance tends to A*exp(i*phi) with a sign flip") {
    // w << w0: H -> A e^{i phi} w0^2 / (-w0^2) = -A e^{i phi}
    SHOParams p{1.5, 1e6, 20.0, 0.0};
    const cplx h = sho_response(p, 1.0);
    CHECK(h.real() == doctest::Approx(-1.5).epsilon(1e-6));
}

TEST_CASE("frequency grid rejects non-increasing input") {
    CHECK_THROWS_AS(FrequencyGrid({1.0, 1.5, 1.5, 2.0, 2.5, 3.0}), ContractViolation);
    CHECK_THROWS_AS(FrequencyGrid({-1.0, 1.0, 2.0, 3.0, 4.0, 5.0}), ContractViolation);
    CHECK_THROWS_AS(FrequencyGrid({1.0, 2.0, 3.0}), ContractViolation);
    const auto g = FrequencyGrid::linspace(1.0, 2.0, 7);
    CHECK(g.size() == 7);
    CHECK(g.freqs()[3] == doctest::Approx(1.5));
}

TEST_CASE("r_squared on a hand-worked series") {
    // stacked series re = (1, 2), im = (3, 4): mean 2.5, SS_tot = 5
    std::vector<cplx> obs{{1, 3}, {2, 4}};
    std::vector<cplx> fit{{1, 3}, {2, 3}};
    CHECK(r_squared(obs, fit) == doctest::Approx(1.0 - 1.0 / 5.0));
    CHECK(r_squared(obs, obs) == doctest::Approx(1.0));
}

TEST_CASE("r_squared on a constant signal is degenerate") {
    std::vector<cplx> c(8, cplx(0.5, 0.5));
    CHECK_THROWS_AS(r_squared(c, c), DegenerateSignalError);
    const auto g = band(1e6, 0.15, 8);
    CHECK_THROWS_AS(fit_sho(c, g), DegenerateSignalError);
}

TEST_CASE("wrap_phase maps into [-pi, pi]") {
    const double pi = std::numbers::pi;
    CHECK(wrap_phase(0.5) == doctest::Approx(0.5));
    CHECK(wrap_phase(2 * pi + 0.5) == doctest::Approx(0.5));
    CHECK(wrap_phase(-2 * pi - 0.5) == doctest::Approx(-0.5));
    CHECK(std::abs(wrap_phase(3 * pi)) == doctest::Approx(pi));
}

TEST_CASE("noiseless fits recover the generating parameters") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> a(0.1, 5.0), q(5.0, 200.0), ph(-3.0, 3.0), off(-0.05, 0.05);
    const double wc = 2 * std::numbers::pi * 350e3;
    for (int k = 0; k < 20; ++k) {
        const SHOParams p{a(rng), wc * (1.0 + off(rng)), q(rng), ph(rng)};
        const auto g = band(wc);
        const auto y = sho_curve(p, g);
        const auto fit = fit_sho(y, g);
        CHECK(fit.r2 > 0.999);
        CHECK(fit.params.amplitude == doctest::Approx(p.amplitude).epsilon(1e-3));
        CHECK(fit.params.resonance == doctest::Approx(p.resonance).epsilon(1e-3));
        CHECK(fit.params.quality_factor == doctest::Approx(p.quality_factor).epsilon(1e-3));
        CHECK(fit.params.phase == doctest::Approx(p.phase).epsilon(1e-3));
    }
}

TEST_CASE("fits stay inside the default bounds") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    const auto g = band(1e6);
    std::vector<cplx> y(g.size());
    for (auto& v : y) v = {n(rng), n(rng)};
    const auto b = SHOBounds::defaults_for(y, g);
    const auto fit = fit_sho(y, g);
    CHECK(fit.params.amplitude <= b.amplitude_hi + 1e-12);
    CHECK(fit.params.amplitude > 0.0);
    CHECK(fit.params.resonance >= b.resonance_lo - 1e-9);
    CHECK(fit.params.resonance <= b.resonance_hi + 1e-9);
    CHECK(fit.params.quality_factor >= 1.0);
    CHECK(fit.params.quality_factor <= 1e4);
    CHECK(std::abs(fit.params.phase) <= std::numbers::pi + 1e-12);
    CHECK(fit.r2 < 0.9);
}

TEST_CASE("default bounds follow the band and the peak") {
    const auto g = FrequencyGrid::linspace(100.0, 200.0, 11);
    std::vector<cplx> y(11, cplx(0.0, 0.0));
    y[3] = cplx(3.0, 4.0);
    const auto b = SHOBounds::defaults_for(y, g);
    CHECK(b.amplitude_hi == doctest::Approx(50.0));
    CHECK(b.resonance_lo == doctest::Approx(50.0));
    CHECK(b.resonance_hi == doctest::Approx(250.0));
}

TEST_CASE("quality score is the mean of per-bias R^2") {
    const SHOParams p{1.0, 1e6, 30.0, 0.0};
    auto s = closed_spectrum(p, 6);
    const auto fits = fit_spectrum(s);
    REQUIRE(fits.size() == 6);
    const auto qs = quality_score(fits);
    double m = 0;
    for (const auto& f : fits) m += f.r2;
    CHECK(qs.q == doctest::Approx(m / 6));
    CHECK(qs.q > 0.999);
}

TEST_CASE("loop is A cos(phi) in bias order") {
    const SHOParams p{1.0, 1e6, 30.0, 0.0};
    const auto s = closed_spectrum(p, 4);
    const auto fits = fit_spectrum(s);
    const auto loop = loop_from_fits(fits, 4);
    REQUIRE(loop.size() == 4);
    // amplitudes 1, 1.1, 1.2, 1.3 with phases pi, 0, pi, 0
    CHECK(loop[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(loop[1] == doctest::Approx(1.1).epsilon(1e-4));
    CHECK(loop[2] == doctest::Approx(-1.2).epsilon(1e-4));
    CHECK(loop[3] == doctest::Approx(1.3).epsilon(1e-4));
}

TEST_CASE("resample_linear interpolates between integer positions") {
    std::vector<double> pos{0, 1, 2}, val{0, 10, 20};
    const auto r = resample_linear(pos, val, 2.0, 5);
    REQUIRE(r.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(r[static_cast<std::size_t>(i)] == doctest::Approx(5.0 * i));
}

TEST_CASE("spectrum validation demands a closed bias loop") {
    const SHOParams p{1.0, 1e6, 30.0, 0.0};
    auto s = closed_spectrum(p, 5);
    CHECK_NOTHROW(s.validate());
    s.sweeps.back().dc_bias = 1.0;
    CHECK_THROWS_AS(s.validate(), ContractViolation);
}

TEST_CASE("spectrum CSV and block formats round-trip") {
    const SHOParams p{1.0, 1e6, 30.0, 0.2};
    const auto s = closed_spectrum(p, 5);
    {
        std::stringstream ss;
        write_spectrum_csv(ss, s);
        std::string header;
        std::getline(ss, header);
        CHECK(header == "bias,freq,re,im");
        ss.seekg(0);
        const auto back = read_spectrum_csv(ss);
        REQUIRE(back.n_dc() == 5);
        CHECK(back.grid.size() == s.grid.size());
        CHECK(std::abs(back.sweeps[2].response[7] - s.sweeps[2].response[7]) < 1e-12);
    }
    {
        std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
        write_spectrum_block(ss, s);
        // u32 + u32 + f64 * (freq + bias + 2 * n_dc * n_freq)
        CHECK(ss.str().size() == 8 + 8 * (32 + 5 + 2 * 5 * 32));
        const auto back = read_spectrum_block(ss);
        CHECK(back.sweeps[4].response[31] == s.sweeps[4].response[31]);
        CHECK(back.sweeps[3].dc_bias == s.sweeps[3].dc_bias);
    }
}

TEST_CASE("little-endian primitives have a fixed byte layout") {
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    write_u32_le(ss, 0x01020304u);
    const auto bytes = ss.str();
    REQUIRE(bytes.size() == 4);
    CHECK(static_cast<unsigned char>(bytes[0]) == 0x04);
    CHECK(static_cast<unsigned char>(bytes[3]) == 0x01);
    CHECK(read_u32_le(ss) == 0x01020304u);
}
