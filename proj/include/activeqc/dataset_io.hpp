#pragma once
// On-disk dataset layout:
//   manifest.json            config, seeds, normalization constants, file list
//   patches.bin / .json      f64 LE block + {"shape": [N, p*p]}
//   loops.bin / .json        f64 LE block + {"shape": [N, L]}
//   clean_loops.bin / .json  same layout, benchmark-only ground truth
//   field.bin / .json        f64 LE block + {"shape": [G, G]}
//   spectra.bin              N consecutive spectrum blocks
//   flags.csv                id,row,col,corrupted
//   quality.csv              id,q

#include "activeqc/bench.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

#include <json.hpp>

namespace aqc::bench {

nlohmann::json config_to_json(const BenchConfig& cfg);
// Missing keys keep their defaults; unknown keys raise ConfigError.
BenchConfig config_from_json(const nlohmann::json& j, BenchConfig base = {});

// Writes a row-major block of `rows` x `cols` doubles and its JSON shape header.
void write_matrix(const std::filesystem::path& stem, const std::vector<double>& values, std::size_t rows,
                  std::size_t cols);
std::vector<double> read_matrix(const std::filesystem::path& stem, std::size_t& rows, std::size_t& cols);

void write_flags_csv(std::ostream& os, const Dataset& ds);

struct FlagRow {
    std::size_t id = 0;
    int row = 0;
    int col = 0;
    bool corrupted = false;
};
std::vector<FlagRow> read_flags_csv(std::istream& is);

// Throws IoError on any file-system failure.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

} // namespace aqc::bench
