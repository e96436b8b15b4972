#include <doctest.h>

#include "activeqc/bench.hpp"
#include "activeqc/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace aqc;
using namespace aqc::bench;

namespace {

BenchConfig small_config(int grid = 24) {
    BenchConfig c;
    c.grid = grid;
    return c;
}

const Dataset& default_dataset() {
    static const Dataset ds = build_dataset(BenchConfig{}, 2);
    return ds;
}

} // namespace

TEST_CASE("patch count follows (G - p + 1)^2") {
    for (int g : {16, 20, 24, 31}) {
        const auto f = generate_ground_truth(g, 1);
        BenchConfig c = small_config(g);
        const auto s = extract_dataset(f, c);
        CHECK(s.size() == static_cast<std::size_t>((g - 16 + 1) * (g - 16 + 1)));
    }
    CHECK(default_dataset().size() == 1225);
}

TEST_CASE("ground truth is seeded and spans [0, 1]") {
    const auto a = generate_ground_truth(30, 9, 40, 3, 6), b = generate_ground_truth(30, 9, 40, 3, 6),
               c = generate_ground_truth(30, 10, 40, 3, 6);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);
    const auto [lo, hi] = std::minmax_element(a.values.begin(), a.values.end());
    CHECK(*lo == doctest::Approx(0.0));
    CHECK(*hi == doctest::Approx(1.0));
}

TEST_CASE("bias waveform is a closed triangle 0 -> +V -> -V -> 0") {
    ShoSynthConfig c;
    const auto v = bias_waveform(c);
    REQUIRE(v.size() == 64);
    CHECK(v.front() == doctest::Approx(0.0));
    CHECK(v.back() == doctest::Approx(0.0));
    CHECK(*std::max_element(v.begin(), v.end()) <= c.v_max + 1e-12);
    CHECK(*std::min_element(v.begin(), v.end()) >= -c.v_max - 1e-12);
}

TEST_CASE("clean spectra fit well, corrupted spectra do not") {
    const auto& ds = default_dataset();
    double qc = 0, qn = 0;
    int nc = 0, nn = 0;
    for (const auto& s : ds.samples) {
        if (s.corrupted) {
            qn += s.quality;
            ++nn;
        } else {
            qc += s.quality;
            ++nc;
        }
    }
    CHECK(qc / nc > 0.99);
    CHECK(qn / nn < 0.5);
}

TEST_CASE("default corruption covers 28-32% of the samples") {
    const auto& ds = default_dataset();
    const auto n = std::count_if(ds.samples.begin(), ds.samples.end(), [](const auto& s) { return s.corrupted; });
    const double f = static_cast<double>(n) / 1225.0;
    CHECK(f >= 0.28);
    CHECK(f <= 0.32);
    // the region is the top-right rectangle
    for (const auto& s : ds.samples) CHECK(s.corrupted == (s.row < 0.53 * 50 && s.col >= 0.45 * 50));
}

TEST_CASE("a region far off target is a configuration error") {
    BenchConfig c;
    c.noise.row_end = 1.0;
    c.noise.col_begin = 0.0; // everything
    CHECK_THROWS_AS(build_dataset(c), RegionConfigError);
}

TEST_CASE("normalization maps patches and loops into [0, 1] and inverts") {
    const auto& ds = default_dataset();
    double pmin = 1, pmax = 0, lmin = 1, lmax = 0;
    for (const auto& s : ds.samples) {
        for (double v : s.patch) pmin = std::min(pmin, v), pmax = std::max(pmax, v);
        for (double v : s.loop) lmin = std::min(lmin, v), lmax = std::max(lmax, v);
    }
    CHECK(pmin == doctest::Approx(0.0));
    CHECK(pmax == doctest::Approx(1.0));
    CHECK(lmin == doctest::Approx(0.0));
    CHECK(lmax == doctest::Approx(1.0));
    auto copy = std::vector<SampleRecord>(ds.samples.begin(), ds.samples.begin() + 3);
    denormalize_dataset(copy, ds.norm);
    CHECK(copy[0].loop[10] ==
          doctest::Approx(ds.norm.loop_min + ds.samples[0].loop[10] * (ds.norm.loop_max - ds.norm.loop_min)));
}

TEST_CASE("constant data cannot be normalized") {
    std::vector<SampleRecord> s(2);
    for (auto& r : s) {
        r.patch.assign(4, 1.0);
        r.loop.assign(4, 0.5);
        r.clean_loop = r.loop;
    }
    CHECK_THROWS_AS(normalize_dataset(s), DegenerateNormalizationError);
}

TEST_CASE("default split is 12 / 110 / 1103 and a partition") {
    const auto sp = make_split(1225, 77);
    CHECK(sp.seed_ids.size() == 12);
    CHECK(sp.val_ids.size() == 110);
    CHECK(sp.pool_ids.size() == 1103);
    std::set<std::size_t> all(sp.seed_ids.begin(), sp.seed_ids.end());
    all.insert(sp.val_ids.begin(), sp.val_ids.end());
    all.insert(sp.pool_ids.begin(), sp.pool_ids.end());
    CHECK(all.size() == 1225);
    CHECK(make_split(1225, 77).seed_ids == sp.seed_ids);
    CHECK(make_split(1225, 78).seed_ids != sp.seed_ids);
    CHECK(make_split(25, 1).seed_ids.size() == 1); // floor with a minimum of one
    CHECK_THROWS_AS(make_split(10, 1, 0.5, 0.5, 0.5), SplitError);
}

TEST_CASE("center crop takes the pixels under the probe") {
    std::vector<double> p(36);
    for (int i = 0; i < 36; ++i) p[static_cast<std::size_t>(i)] = i;
    const auto c = center_crop(p, 6, 2);
    CHECK(c == std::vector<double>{14, 15, 20, 21});
    CHECK_THROWS_AS(center_crop(p, 6, 3), ContractViolation);
}

TEST_CASE("virtual instrument refuses a second measurement") {
    const auto& ds = default_dataset();
    VirtualInstrument vi(ds);
    const auto m = vi.measure(5);
    CHECK(m.quality == ds.samples[5].quality);
    CHECK(vi.measured(5));
    CHECK(vi.measurement_count() == 1);
    CHECK_THROWS_AS(vi.measure(5), AlreadyMeasuredError);
}

TEST_CASE("dataset build is deterministic and thread-count independent") {
    const auto a = build_dataset(small_config(), 1);
    const auto b = build_dataset(small_config(), 3);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.samples[i].loop == b.samples[i].loop);
        CHECK(a.samples[i].quality == b.samples[i].quality);
    }
}

TEST_CASE("clean loops are the loops before corruption") {
    const auto& ds = default_dataset();
    for (const auto& s : ds.samples) {
        if (!s.corrupted) {
            CHECK(s.loop == s.clean_loop);
            break;
        }
    }
    const auto it = std::find_if(ds.samples.begin(), ds.samples.end(), [](const auto& s) { return s.corrupted; });
    REQUIRE(it != ds.samples.end());
    CHECK(it->loop != it->clean_loop);
}

TEST_CASE("normalized coordinates span [0, 1]") {
    const auto& ds = default_dataset();
    const auto first = normalized_coord(ds, ds.samples.front());
    const auto last = normalized_coord(ds, ds.samples.back());
    CHECK(first[0] == 0.0);
    CHECK(last[0] == doctest::Approx(1.0));
    CHECK(last[1] == doctest::Approx(1.0));
}
