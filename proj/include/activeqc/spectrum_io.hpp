#pragma once
// Raw band-excitation spectrum serialization.
//
// CSV: header "bias,freq,re,im", one row per (bias point, frequency) in sweep
// order. Binary block (little-endian): u32 N_DC, u32 N_freq, then f64 values:
// N_freq frequencies, N_DC biases, and N_DC*N_freq (re, im) pairs in sweep order.

#include "activeqc/sho.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>

namespace aqc::sho {

void write_spectrum_csv(std::ostream& os, const RawBESpectrum& spectrum);
RawBESpectrum read_spectrum_csv(std::istream& is);

void write_spectrum_block(std::ostream& os, const RawBESpectrum& spectrum);
RawBESpectrum read_spectrum_block(std::istream& is);

// Little-endian primitives reused by the other binary formats.
void write_u32_le(std::ostream& os, std::uint32_t v);
void write_f64_le(std::ostream& os, double v);
std::uint32_t read_u32_le(std::istream& is);
double read_f64_le(std::istream& is);

} // namespace aqc::sho
