#include <doctest.h>

#include "activeqc/error.hpp"
#include "activeqc/stats.hpp"

#include <cmath>
#include <numbers>

using namespace aqc;
using namespace aqc::stats;

TEST_CASE("mean, variance and SEM") {
    const std::vector<double> x{2, 4, 4, 4, 5, 5, 7, 9};
    CHECK(mean(x) == doctest::Approx(5.0));
    CHECK(variance(x) == doctest::Approx(32.0 / 7.0));
    CHECK(sem(x) == doctest::Approx(std::sqrt(32.0 / 7.0 / 8.0)));
    const std::vector<double> one{3.0};
    CHECK(sem(one) == 0.0);
    CHECK_THROWS_AS(mean(std::vector<double>{}), ContractViolation);
}

TEST_CASE("incomplete beta closed forms") {
    // I_0.5(2, 3) = sum_{j=2..4} C(4, j) / 16 = 11/16
    CHECK(incomplete_beta(2, 3, 0.5) == doctest::Approx(11.0 / 16.0).epsilon(1e-13));
    for (double x : {0.1, 0.37, 0.9}) {
        CHECK(incomplete_beta(1, 1, x) == doctest::Approx(x).epsilon(1e-13));
        CHECK(incomplete_beta(3.5, 1, x) == doctest::Approx(std::pow(x, 3.5)).epsilon(1e-12));
        CHECK(incomplete_beta(1, 2.5, x) == doctest::Approx(1 - std::pow(1 - x, 2.5)).epsilon(1e-12));
    }
    CHECK(incomplete_beta(2, 3, 0.0) == 0.0);
    CHECK(incomplete_beta(2, 3, 1.0) == 1.0);
    CHECK_THROWS_AS(incomplete_beta(0, 1, 0.5), ContractViolation);
}

TEST_CASE("t CDF matches the Cauchy and df = 2 closed forms") {
    for (double t : {-7.0, -1.3, 0.0, 0.4, 2.5, 30.0}) {
        CHECK(student_t_cdf(t, 1) == doctest::Approx(0.5 + std::atan(t) / std::numbers::pi).epsilon(1e-12));
        CHECK(student_t_cdf(t, 2) == doctest::Approx(0.5 + t / (2 * std::sqrt(2 + t * t))).epsilon(1e-12));
    }
}

TEST_CASE("Welch with equal n and equal variance has df = 2n - 2") {
    const std::vector<double> a{1, 2, 3}, b{2, 3, 4};
    const auto r = welch_t_test(a, b);
    CHECK(r.df == doctest::Approx(4.0));
    CHECK(r.t == doctest::Approx(-1.0 / std::sqrt(2.0 / 3.0)));
    // df = 4 closed form with s = t / sqrt(4 + t^2): F(t) = 1/2 + 3s/4 - s^3/4
    const double t = std::abs(r.t);
    const double s = t / std::sqrt(4 + t * t);
    const double cdf = 0.5 + 0.75 * s - 0.25 * s * s * s;
    CHECK(r.p == doctest::Approx(2 * (1 - cdf)).epsilon(1e-10));
}

TEST_CASE("Welch zero-variance conventions") {
    const std::vector<double> a{1, 1, 1}, b{1, 1}, c{2, 2};
    const auto same = welch_t_test(a, b);
    CHECK(same.p == 1.0);
    CHECK(same.t == 0.0);
    CHECK_FALSE(same.degenerate);
    const auto diff = welch_t_test(a, c);
    CHECK(diff.degenerate);
    CHECK(diff.p > 0.0);
    CHECK(diff.p < 1e-300);
    CHECK_THROWS_AS(welch_t_test(std::vector<double>{1}, c), ContractViolation);
}

TEST_CASE("Welch is antisymmetric in t and symmetric in p") {
    const std::vector<double> a{0.1, 0.4, 0.35, 0.2}, b{0.5, 0.9, 0.7, 0.6, 0.8};
    const auto ab = welch_t_test(a, b), ba = welch_t_test(b, a);
    CHECK(ab.t == doctest::Approx(-ba.t));
    CHECK(ab.p == doctest::Approx(ba.p));
    CHECK(ab.df == doctest::Approx(ba.df));
}

TEST_CASE("ROC-AUC via ranks") {
    const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
    CHECK(roc_auc(s, {false, true, false, true}) == doctest::Approx(1.0));
    CHECK(roc_auc(s, {true, false, true, false}) == doctest::Approx(0.0));
    // pairs (pos, neg): (0.4,0.1)=1 (0.4,0.8)=0 (0.35,0.1)=1 (0.35,0.8)=0 -> 0.5
    CHECK(roc_auc(s, {false, true, true, false}) == doctest::Approx(0.5));
    const std::vector<double> tied{0.5, 0.5, 0.5};
    CHECK(roc_auc(tied, {true, false, false}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(roc_auc(s, {true, true, true, true}), ContractViolation);
}
