#include "activeqc/spectrum_io.hpp"

#include "activeqc/error.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace aqc::sho {

namespace {

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw ConfigError("bad number in spectrum CSV: '" + s + "'");
    return v;
}

} // namespace

void write_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_f64_le(std::ostream& os, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFFu);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32_le(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated binary block");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double read_f64_le(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("truncated binary block");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

void write_spectrum_csv(std::ostream& os, const RawBESpectrum& spectrum) {
    os << "bias,freq,re,im\n";
    os << std::setprecision(17);
    const auto f = spectrum.grid.freqs();
    for (const auto& s : spectrum.sweeps) {
        for (std::size_t i = 0; i < f.size(); ++i) {
            os << s.dc_bias << ',' << f[i] << ',' << s.response[i].real() << ','
               << s.response[i].imag() << '\n';
        }
    }
}

RawBESpectrum read_spectrum_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "bias,freq,re,im") {
        throw ConfigError("spectrum CSV: missing header");
    }
    RawBESpectrum out;
    std::vector<double> freqs;
    bool grid_done = false;
    std::size_t col = 0;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        double v[4];
        int n = 0;
        while (std::getline(ss, cell, ',')) {
            if (n >= 4) throw ConfigError("spectrum CSV line " + std::to_string(lineno) + ": too many columns");
            v[n++] = parse_double(cell);
        }
        if (n != 4) throw ConfigError("spectrum CSV line " + std::to_string(lineno) + ": expected 4 columns");
        // The first sweep ends at the first bias change; later sweeps are fixed-size chunks.
        if (out.sweeps.empty()) {
            out.sweeps.push_back({v[0], {}});
        } else if (!grid_done && v[0] != out.sweeps.back().dc_bias) {
            grid_done = true;
            out.sweeps.push_back({v[0], {}});
            col = 0;
        } else if (grid_done && col == freqs.size()) {
            out.sweeps.push_back({v[0], {}});
            col = 0;
        }
        if (!grid_done) {
            freqs.push_back(v[1]);
        } else if (freqs[col] != v[1] || v[0] != out.sweeps.back().dc_bias) {
            throw ConfigError("spectrum CSV line " + std::to_string(lineno) + ": sweep layout mismatch");
        }
        out.sweeps.back().response.emplace_back(v[2], v[3]);
        ++col;
    }
    out.grid = FrequencyGrid(std::move(freqs));
    for (const auto& s : out.sweeps) {
        if (s.response.size() != out.grid.size()) throw ConfigError("spectrum CSV: ragged sweep");
    }
    return out;
}

void write_spectrum_block(std::ostream& os, const RawBESpectrum& spectrum) {
    write_u32_le(os, static_cast<std::uint32_t>(spectrum.sweeps.size()));
    write_u32_le(os, static_cast<std::uint32_t>(spectrum.grid.size()));
    for (double f : spectrum.grid.freqs()) write_f64_le(os, f);
    for (const auto& s : spectrum.sweeps) write_f64_le(os, s.dc_bias);
    for (const auto& s : spectrum.sweeps) {
        for (const auto& v : s.response) {
            write_f64_le(os, v.real());
            write_f64_le(os, v.imag());
        }
    }
}

RawBESpectrum read_spectrum_block(std::istream& is) {
    const auto n_dc = read_u32_le(is);
    const auto n_freq = read_u32_le(is);
    if (n_dc < 2 || n_freq < 6 || n_dc > (1u << 20) || n_freq > (1u << 20)) {
        throw ConfigError("spectrum block: implausible header");
    }
    std::vector<double> freqs(n_freq);
    for (auto& f : freqs) f = read_f64_le(is);
    RawBESpectrum out;
    out.grid = FrequencyGrid(std::move(freqs));
    out.sweeps.resize(n_dc);
    for (auto& s : out.sweeps) s.dc_bias = read_f64_le(is);
    for (auto& s : out.sweeps) {
        s.response.resize(n_freq);
        for (auto& v : s.response) {
            const double re = read_f64_le(is);
            const double im = read_f64_le(is);
            v = {re, im};
        }
    }
    return out;
}

} // namespace aqc::sho
