#include <doctest.h>

#include "activeqc/acquisition.hpp"
#include "activeqc/error.hpp"

#include <cmath>

using namespace aqc;
using namespace aqc::acq;

TEST_CASE("min-max normalization") {
    const std::vector<double> x{2.0, 4.0, 3.0};
    const auto n = minmax_normalize(x);
    CHECK(n[0] == doctest::Approx(0.0));
    CHECK(n[1] == doctest::Approx(1.0));
    CHECK(n[2] == doctest::Approx(0.5));
    const std::vector<double> c{7.0, 7.0};
    CHECK(minmax_normalize(c) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("distance: sum over the training set versus nearest") {
    // 1-D latents: candidates at 0 and 10, training at 1 and 2
    Matrix cand(1, 2), train(1, 2);
    cand << 0, 10;
    train << 1, 2;
    const auto sum = raw_distance_scores(cand, train, DistanceMode::Sum);
    CHECK(sum[0] == doctest::Approx(3.0));
    CHECK(sum[1] == doctest::Approx(17.0));
    const auto near = raw_distance_scores(cand, train, DistanceMode::Nearest);
    CHECK(near[0] == doctest::Approx(1.0));
    CHECK(near[1] == doctest::Approx(8.0));
    CHECK_THROWS_AS(raw_distance_scores(cand, Matrix(1, 0)), ContractViolation);
}

TEST_CASE("representativeness is mean cosine similarity to the other candidates") {
    Matrix c(2, 3);
    c << 1, 0, 1,
         0, 1, 1;
    const auto r = raw_representativeness_scores(c);
    const double s = 1.0 / std::sqrt(2.0);
    CHECK(r[0] == doctest::Approx((0.0 + s) / 2));
    CHECK(r[1] == doctest::Approx((0.0 + s) / 2));
    CHECK(r[2] == doctest::Approx((s + s) / 2));
    Matrix z = Matrix::Zero(2, 2);
    const auto rz = raw_representativeness_scores(z);
    CHECK(rz[0] == 0.0);
}

TEST_CASE("combined score uses the weights") {
    AcquisitionComponents c{{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}};
    const auto s = combine_scores(c, AcquisitionWeights{});
    CHECK(s[0] == doctest::Approx(0.9 + 0.025));
    CHECK(s[1] == doctest::Approx(0.05 + 0.025));
    AcquisitionWeights bad{0.9, -0.05, 0.15};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("gate zeroes candidates below tau and keeps the boundary") {
    const std::vector<double> s{0.3, 0.8, 0.5}, q{0.95, 0.5, 0.9};
    const auto a = gate(s, q, 0.9);
    CHECK(a == std::vector<double>{0.3, 0.0, 0.5});
}

TEST_CASE("batch selection: top-k, ties to the lowest index, shortfall") {
    const std::vector<double> a{0.2, 0.7, 0.7, 0.0, 0.9};
    auto sel = select_batch(a, 2);
    CHECK(sel.indices == std::vector<std::size_t>{4, 1});
    CHECK_FALSE(sel.shortfall);
    sel = select_batch(a, 5);
    CHECK(sel.indices == std::vector<std::size_t>{4, 1, 2, 0});
    CHECK(sel.shortfall);
    const std::vector<double> zero{0.0, 0.0};
    CHECK(select_batch(zero, 1).empty());
}

TEST_CASE("ActiveQC never selects below the threshold") {
    StepContext ctx;
    ctx.candidate_latents = Matrix::Random(4, 20);
    ctx.training_latents = Matrix::Random(4, 5);
    for (int i = 0; i < 20; ++i) {
        ctx.predicted_error.push_back(static_cast<double>(i));
        ctx.q_hat.push_back(i % 3 == 0 ? 0.95 : 0.5);
    }
    const auto sc = strategy_scores(Strategy::ActiveQC, ctx);
    const auto sel = select_batch(sc.a, 6);
    REQUIRE(sel.indices.size() == 6);
    for (auto i : sel.indices) CHECK(ctx.q_hat[i] >= 0.9);
    // Active scores the same candidates without the gate
    const auto act = strategy_scores(Strategy::Active, ctx);
    CHECK(act.s == sc.s);
    CHECK(act.a == act.s);
}

TEST_CASE("Random scores come from the trial RNG and are all eligible") {
    std::mt19937_64 a(5), b(5);
    StepContext ctx;
    ctx.n_candidates = 10;
    ctx.rng = &a;
    const auto s1 = strategy_scores(Strategy::Random, ctx);
    ctx.rng = &b;
    const auto s2 = strategy_scores(Strategy::Random, ctx);
    CHECK(s1.s == s2.s);
    for (double v : s1.a) CHECK(v > 0.0);
    CHECK_FALSE(s1.components.has_value());
    ctx.rng = nullptr;
    CHECK_THROWS_AS(strategy_scores(Strategy::Random, ctx), ContractViolation);
}

TEST_CASE("strategy names parse case-insensitively") {
    CHECK(strategy_from_string("activeqc") == Strategy::ActiveQC);
    CHECK(strategy_from_string("ActiveMT") == Strategy::ActiveMT);
    CHECK(to_string(Strategy::Random) == "Random");
    CHECK_THROWS_AS(strategy_from_string("greedy"), ConfigError);
}
