#include "activeqc/dataset_io.hpp"

#include "activeqc/error.hpp"
#include "activeqc/spectrum_io.hpp"

#include <fstream>
#include <sstream>
#include <string>

namespace aqc::bench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

// Reads j[key] into out when present.
template <class T>
void take(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

void check_keys(const json& j, std::initializer_list<const char*> known, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* name : known) ok = ok || k == name;
        if (!ok) throw ConfigError(std::string("unknown key '") + k + "' in " + where);
    }
}

std::ofstream open_out(const fs::path& p, bool binary = false) {
    std::ofstream os(p, binary ? std::ios::binary : std::ios::out);
    if (!os) throw IoError("cannot write " + p.string());
    return os;
}

std::ifstream open_in(const fs::path& p, bool binary = false) {
    std::ifstream is(p, binary ? std::ios::binary : std::ios::in);
    if (!is) throw IoError("cannot read " + p.string());
    return is;
}

fs::path with_ext(fs::path stem, const char* ext) { return stem.replace_extension(ext); }

} // namespace

json config_to_json(const BenchConfig& cfg) {
    json j;
    j["grid"] = cfg.grid;
    j["patch"] = cfg.patch;
    j["stride"] = cfg.stride;
    j["loop_length"] = cfg.loop_length;
    j["target_side"] = cfg.target_side;
    j["n_blobs"] = cfg.n_blobs;
    j["blob_width_min"] = cfg.blob_width_min;
    j["blob_width_max"] = cfg.blob_width_max;
    j["seed"] = cfg.seed;
    j["sho"] = {{"n_dc", cfg.sho.n_dc},
                {"n_freq", cfg.sho.n_freq},
                {"center_hz", cfg.sho.center_hz},
                {"band_fraction", cfg.sho.band_fraction},
                {"v_max", cfg.sho.v_max},
                {"baseline_noise", cfg.sho.baseline_noise},
                {"q_base", cfg.sho.q_base},
                {"q_slope", cfg.sho.q_slope}};
    j["noise"] = {{"row_begin", cfg.noise.row_begin},
                  {"row_end", cfg.noise.row_end},
                  {"col_begin", cfg.noise.col_begin},
                  {"col_end", cfg.noise.col_end},
                  {"sigma_scale", cfg.noise.sigma_scale},
                  {"target_fraction", cfg.noise.target_fraction},
                  {"tolerance", cfg.noise.tolerance}};
    return j;
}

BenchConfig config_from_json(const json& j, BenchConfig c) {
    try {
        check_keys(j,
                   {"grid", "patch", "stride", "loop_length", "target_side", "n_blobs", "blob_width_min",
                    "blob_width_max", "seed", "sho", "noise"},
                   "bench config");
        take(j, "grid", c.grid);
        take(j, "patch", c.patch);
        take(j, "stride", c.stride);
        take(j, "loop_length", c.loop_length);
        take(j, "target_side", c.target_side);
        take(j, "n_blobs", c.n_blobs);
        take(j, "blob_width_min", c.blob_width_min);
        take(j, "blob_width_max", c.blob_width_max);
        take(j, "seed", c.seed);
        if (auto it = j.find("sho"); it != j.end()) {
            check_keys(*it,
                       {"n_dc", "n_freq", "center_hz", "band_fraction", "v_max", "baseline_noise", "q_base",
                        "q_slope"},
                       "sho config");
            take(*it, "n_dc", c.sho.n_dc);
            take(*it, "n_freq", c.sho.n_freq);
            take(*it, "center_hz", c.sho.center_hz);
            take(*it, "band_fraction", c.sho.band_fraction);
            take(*it, "v_max", c.sho.v_max);
            take(*it, "baseline_noise", c.sho.baseline_noise);
            take(*it, "q_base", c.sho.q_base);
            take(*it, "q_slope", c.sho.q_slope);
        }
        if (auto it = j.find("noise"); it != j.end()) {
            check_keys(*it,
                       {"row_begin", "row_end", "col_begin", "col_end", "sigma_scale", "target_fraction",
                        "tolerance"},
                       "noise config");
            take(*it, "row_begin", c.noise.row_begin);
            take(*it, "row_end", c.noise.row_end);
            take(*it, "col_begin", c.noise.col_begin);
            take(*it, "col_end", c.noise.col_end);
            take(*it, "sigma_scale", c.noise.sigma_scale);
            take(*it, "target_fraction", c.noise.target_fraction);
            take(*it, "tolerance", c.noise.tolerance);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bench config: ") + e.what());
    }
    c.validate();
    return c;
}

void write_matrix(const fs::path& stem, const std::vector<double>& values, std::size_t rows, std::size_t cols) {
    if (values.size() != rows * cols) throw ContractViolation("write_matrix: size does not match shape");
    {
        auto os = open_out(with_ext(stem, ".json"));
        os << json{{"dtype", "f64le"}, {"shape", {rows, cols}}}.dump() << '\n';
    }
    auto os = open_out(with_ext(stem, ".bin"), true);
    for (double v : values) sho::write_f64_le(os, v);
    if (!os) throw IoError("write failed: " + with_ext(stem, ".bin").string());
}

std::vector<double> read_matrix(const fs::path& stem, std::size_t& rows, std::size_t& cols) {
    json header;
    try {
        auto is = open_in(with_ext(stem, ".json"));
        header = json::parse(is);
        if (header.at("dtype") != "f64le") throw ConfigError("unsupported dtype in " + stem.string());
        rows = header.at("shape").at(0).get<std::size_t>();
        cols = header.at("shape").at(1).get<std::size_t>();
    } catch (const json::exception& e) {
        throw ConfigError("bad shape header " + stem.string() + ": " + e.what());
    }
    auto is = open_in(with_ext(stem, ".bin"), true);
    std::vector<double> out(rows * cols);
    try {
        for (double& v : out) v = sho::read_f64_le(is);
    } catch (const Error&) {
        throw IoError("truncated block " + with_ext(stem, ".bin").string());
    }
    return out;
}

void write_flags_csv(std::ostream& os, const Dataset& ds) {
    os << "id,row,col,corrupted\n";
    for (const auto& s : ds.samples) os << s.id << ',' << s.row << ',' << s.col << ',' << (s.corrupted ? 1 : 0) << '\n';
}

std::vector<FlagRow> read_flags_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("id,row,col,corrupted", 0) != 0)
        throw ConfigError("flags csv: bad header");
    std::vector<FlagRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        FlagRow r;
        char c1 = 0, c2 = 0, c3 = 0;
        int flag = 0;
        if (!(ls >> r.id >> c1 >> r.row >> c2 >> r.col >> c3 >> flag) || c1 != ',' || c2 != ',' || c3 != ',' ||
            (flag != 0 && flag != 1))
            throw ConfigError("flags csv: malformed row '" + line + "'");
        r.corrupted = flag == 1;
        rows.push_back(r);
    }
    return rows;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const std::size_t n = ds.size();
    const auto p2 = static_cast<std::size_t>(ds.config.patch * ds.config.patch);
    const auto L = static_cast<std::size_t>(ds.config.loop_length);

    std::vector<double> patches, loops, clean;
    patches.reserve(n * p2);
    loops.reserve(n * L);
    clean.reserve(n * L);
    for (const auto& s : ds.samples) {
        patches.insert(patches.end(), s.patch.begin(), s.patch.end());
        loops.insert(loops.end(), s.loop.begin(), s.loop.end());
        clean.insert(clean.end(), s.clean_loop.begin(), s.clean_loop.end());
    }
    write_matrix(dir / "patches", patches, n, p2);
    write_matrix(dir / "loops", loops, n, L);
    write_matrix(dir / "clean_loops", clean, n, L);
    write_matrix(dir / "field", ds.field.values, static_cast<std::size_t>(ds.field.size),
                 static_cast<std::size_t>(ds.field.size));

    {
        auto os = open_out(dir / "spectra.bin", true);
        for (const auto& s : ds.samples) sho::write_spectrum_block(os, s.raw);
        if (!os) throw IoError("write failed: spectra.bin");
    }
    {
        auto os = open_out(dir / "flags.csv");
        write_flags_csv(os, ds);
    }
    {
        auto os = open_out(dir / "quality.csv");
        os << "id,q\n";
        os.precision(17);
        for (const auto& s : ds.samples) os << s.id << ',' << s.quality << '\n';
    }

    json m;
    m["format_version"] = kFormatVersion;
    m["config"] = config_to_json(ds.config);
    m["seeds"] = {{"base", ds.config.seed},
                  {"field", mix_seed(ds.config.seed, 1)},
                  {"spectra", mix_seed(ds.config.seed, 2)},
                  {"noise", mix_seed(ds.config.seed, 3)}};
    m["normalization"] = {{"patch_min", ds.norm.patch_min},
                          {"patch_max", ds.norm.patch_max},
                          {"loop_min", ds.norm.loop_min},
                          {"loop_max", ds.norm.loop_max}};
    m["n_samples"] = n;
    m["centers_per_side"] = ds.centers_per_side();
    m["files"] = {"patches.bin", "loops.bin", "clean_loops.bin", "field.bin", "spectra.bin", "flags.csv",
                  "quality.csv"};
    auto os = open_out(dir / "manifest.json");
    os << m.dump(2) << '\n';
    if (!os) throw IoError("write failed: manifest.json");
}

Dataset load_dataset(const fs::path& dir) {
    json m;
    {
        auto is = open_in(dir / "manifest.json");
        try {
            m = json::parse(is);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("manifest: ") + e.what());
        }
    }
    Dataset ds;
    std::size_t n = 0;
    try {
        if (m.at("format_version").get<int>() != kFormatVersion) throw ConfigError("manifest: unsupported version");
        ds.config = config_from_json(m.at("config"));
        const auto& nj = m.at("normalization");
        ds.norm = {nj.at("patch_min").get<double>(), nj.at("patch_max").get<double>(),
                   nj.at("loop_min").get<double>(), nj.at("loop_max").get<double>()};
        n = m.at("n_samples").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("manifest: ") + e.what());
    }

    std::size_t r = 0, c = 0;
    const auto patches = read_matrix(dir / "patches", r, c);
    const auto p2 = static_cast<std::size_t>(ds.config.patch * ds.config.patch);
    if (r != n || c != p2) throw ConfigError("patches shape does not match manifest");
    const auto loops = read_matrix(dir / "loops", r, c);
    const auto L = static_cast<std::size_t>(ds.config.loop_length);
    if (r != n || c != L) throw ConfigError("loops shape does not match manifest");
    const auto clean = read_matrix(dir / "clean_loops", r, c);
    if (r != n || c != L) throw ConfigError("clean loop shape does not match manifest");
    ds.field.values = read_matrix(dir / "field", r, c);
    if (r != c || r != static_cast<std::size_t>(ds.config.grid)) throw ConfigError("field shape mismatch");
    ds.field.size = static_cast<int>(r);

    std::vector<FlagRow> flags;
    {
        auto is = open_in(dir / "flags.csv");
        flags = read_flags_csv(is);
    }
    if (flags.size() != n) throw ConfigError("flags.csv row count does not match manifest");

    std::vector<double> quality(n, 0.0);
    {
        auto is = open_in(dir / "quality.csv");
        std::string line;
        std::getline(is, line);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t id = 0;
            char comma = 0;
            double q = 0.0;
            if (!(is >> id >> comma >> q) || id != i) throw ConfigError("quality.csv malformed");
            quality[i] = q;
        }
    }

    auto spectra = open_in(dir / "spectra.bin", true);
    ds.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& s = ds.samples[i];
        s.id = i;
        if (flags[i].id != i) throw ConfigError("flags.csv ids out of order");
        s.row = flags[i].row;
        s.col = flags[i].col;
        s.top = s.row - ds.config.patch / 2;
        s.left = s.col - ds.config.patch / 2;
        s.corrupted = flags[i].corrupted;
        s.quality = quality[i];
        s.patch.assign(patches.begin() + static_cast<std::ptrdiff_t>(i * p2),
                       patches.begin() + static_cast<std::ptrdiff_t>((i + 1) * p2));
        s.loop.assign(loops.begin() + static_cast<std::ptrdiff_t>(i * L),
                      loops.begin() + static_cast<std::ptrdiff_t>((i + 1) * L));
        s.clean_loop.assign(clean.begin() + static_cast<std::ptrdiff_t>(i * L),
                            clean.begin() + static_cast<std::ptrdiff_t>((i + 1) * L));
        try {
            s.raw = sho::read_spectrum_block(spectra);
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw IoError(std::string("spectra.bin: ") + e.what());
        }
    }
    return ds;
}

} // namespace aqc::bench
