#include <doctest.h>

#include "activeqc/error.hpp"
#include "activeqc/gp.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace aqc;
using namespace aqc::gp;

namespace {

// Dense direct-solve oracle: LU on the full covariance, no Cholesky.
struct Dense {
    Eigen::MatrixXd K;
    Eigen::VectorXd alpha;
};

double k_se(const Coord& a, const Coord& b, const GPHyperparams& h) {
    const double dx = a[0] - b[0], dy = a[1] - b[1];
    return h.signal_variance * std::exp(-(dx * dx + dy * dy) / (2 * h.lengthscale * h.lengthscale));
}

Dense dense(const std::vector<Coord>& x, const std::vector<double>& y, const GPHyperparams& h, double jitter) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Dense d;
    d.K.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) d.K(i, j) = k_se(x[i], x[j], h) + (i == j ? h.noise_variance + jitter : 0);
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = y[i] - h.prior_mean;
    d.alpha = d.K.fullPivLu().solve(r);
    return d;
}

std::vector<Coord> random_coords(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Coord> x;
    for (int i = 0; i < n; ++i) x.push_back({u(rng), u(rng)});
    return x;
}

} // namespace

TEST_CASE("kernel value matches the squared-exponential formula") {
    GPHyperparams h{0.2, 0.5, 1e-4, 0.0};
    CHECK(rbf_kernel({0, 0}, {0, 0}, h) == doctest::Approx(0.5));
    CHECK(rbf_kernel({0, 0}, {0.2, 0}, h) == doctest::Approx(0.5 * std::exp(-0.5)));
    CHECK(rbf_kernel({0.1, 0.3}, {0.4, 0.7}, h) == doctest::Approx(k_se({0.1, 0.3}, {0.4, 0.7}, h)));
}

TEST_CASE("one training point interpolates") {
    GPHyperparams h{0.1, 0.05, 1e-4, 0.5};
    std::vector<Coord> x{{0.3, 0.3}};
    std::vector<double> y{0.9};
    const auto m = gp_fit(x, y, h);
    const auto p = gp_predict(m, x);
    // mean = m0 + k/(k+sn) (y - m0)
    const double expect = 0.5 + 0.05 / (0.05 + 1e-4 + m.jitter) * 0.4;
    CHECK(p.mean[0] == doctest::Approx(expect).epsilon(1e-12));
    // far away the prior mean comes back
    const auto far = gp_predict(m, std::vector<Coord>{{5.0, 5.0}});
    CHECK(far.mean[0] == doctest::Approx(0.5));
    CHECK(far.variance[0] == doctest::Approx(0.05));
}

TEST_CASE("near-noiseless fit reproduces targets") {
    const auto x = random_coords(15, 1);
    std::vector<double> y;
    for (const auto& c : x) y.push_back(std::sin(3 * c[0]) * std::cos(2 * c[1]));
    GPHyperparams h{0.3, 1.0, 1e-12, 0.0};
    const auto m = gp_fit(x, y, h);
    const auto p = gp_predict(m, x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(p.mean[i] - y[i]) < 1e-6);
}

TEST_CASE("predictions match a dense direct solve") {
    const auto x = random_coords(5, 2);
    std::vector<double> y{0.95, 0.2, 0.7, 0.99, 0.4};
    GPHyperparams h{0.25, 0.05, 1e-4, 0.65};
    const auto m = gp_fit(x, y, h);
    const auto d = dense(x, y, h, m.jitter);
    const auto q = random_coords(7, 3);
    const auto p = gp_predict(m, q);
    const Eigen::MatrixXd Kinv = d.K.inverse();
    for (std::size_t j = 0; j < q.size(); ++j) {
        Eigen::VectorXd ks(5);
        for (int i = 0; i < 5; ++i) ks(i) = k_se(x[static_cast<std::size_t>(i)], q[j], h);
        const double mean = h.prior_mean + ks.dot(d.alpha);
        const double var = h.signal_variance - ks.dot(Kinv * ks);
        CHECK(std::abs(p.mean[j] - mean) < 1e-8);
        CHECK(std::abs(p.variance[j] - var) < 1e-8);
        CHECK(p.variance[j] >= 0.0);
    }
}

TEST_CASE("log marginal likelihood matches the closed form") {
    const auto x = random_coords(6, 4);
    std::vector<double> y{0.1, 0.5, 0.3, 0.9, 0.8, 0.2};
    GPHyperparams h{0.2, 0.1, 1e-3, 0.4};
    const auto m = gp_fit(x, y, h);
    const auto d = dense(x, y, h, m.jitter);
    Eigen::VectorXd r(6);
    for (int i = 0; i < 6; ++i) r(i) = y[static_cast<std::size_t>(i)] - 0.4;
    const double logdet = std::log(d.K.determinant());
    const double expect = -0.5 * r.dot(d.alpha) - 0.5 * logdet - 3.0 * std::log(2 * std::numbers::pi);
    CHECK(log_marginal_likelihood(m) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("variance is never negative, even for duplicated inputs") {
    std::vector<Coord> x{{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5000001}};
    std::vector<double> y{1.0, 1.0, 1.0};
    GPHyperparams h{0.1, 0.05, 0.0, 1.0};
    const auto m = gp_fit(x, y, h);
    const auto q = random_coords(50, 5);
    const auto p = gp_predict(m, q);
    for (double v : p.variance) CHECK(v >= 0.0);
}

TEST_CASE("default grid is 3x3x3 and log-spaced by 3") {
    const auto g = default_grid(GPHyperparams{}, 0.7);
    REQUIRE(g.size() == 27);
    double lmin = 1e9, lmax = 0;
    for (const auto& h : g) {
        lmin = std::min(lmin, h.lengthscale);
        lmax = std::max(lmax, h.lengthscale);
        CHECK(h.prior_mean == 0.7);
    }
    CHECK(lmin == doctest::Approx(0.1 / 3));
    CHECK(lmax == doctest::Approx(0.3));
}

TEST_CASE("selection returns the grid element with the largest evidence") {
    const auto x = random_coords(30, 6);
    std::vector<double> y;
    for (const auto& c : x) y.push_back(c[0] > 0.5 ? 0.2 : 0.99);
    const auto grid = default_grid(GPHyperparams{}, 0.6);
    const auto best = select_hyperparams(x, y, grid);
    double best_lml = -1e300;
    GPHyperparams oracle;
    for (const auto& h : grid) {
        const double l = log_marginal_likelihood(gp_fit(x, y, h));
        if (l > best_lml) {
            best_lml = l;
            oracle = h;
        }
    }
    CHECK(best.lengthscale == oracle.lengthscale);
    CHECK(best.signal_variance == oracle.signal_variance);
    CHECK(best.noise_variance == oracle.noise_variance);
}

TEST_CASE("empty or mismatched training data is rejected") {
    std::vector<Coord> x{{0, 0}};
    std::vector<double> y{1, 2};
    CHECK_THROWS_AS(gp_fit(x, y, GPHyperparams{}), ContractViolation);
    CHECK_THROWS_AS(gp_fit(std::vector<Coord>{}, std::vector<double>{}, GPHyperparams{}), ContractViolation);
}

TEST_CASE("json round trip refits the same model") {
    const auto x = random_coords(8, 7);
    std::vector<double> y{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    const auto m = gp_fit(x, y, GPHyperparams{0.2, 0.05, 1e-4, 0.45});
    const auto back = model_from_json(to_json(m));
    const auto q = random_coords(4, 8);
    const auto a = gp_predict(m, q), b = gp_predict(back, q);
    for (std::size_t i = 0; i < q.size(); ++i) CHECK(a.mean[i] == doctest::Approx(b.mean[i]).epsilon(1e-14));
}
