#include <doctest.h>

#include "activeqc/error.hpp"
#include "activeqc/net.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

using namespace aqc;
using namespace aqc::net;

namespace {

Matrix random_matrix(int rows, int cols, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = n(rng);
    return m;
}

// Central differences on `loss`, written here rather than reusing the
// library's checker. Parameters sitting on a rectifier kink (the one-sided
// slopes disagree) are skipped.
double max_fd_error(const ModelParams& p0, const Matrix& x, const Matrix& y, const Matrix* r, double lambda,
                    int n_check, std::uint64_t seed) {
    const auto g = gradient(p0, x, y, r, lambda);
    auto theta = p0.flatten();
    REQUIRE(g.size() == theta.size());
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, theta.size() - 1);
    ModelParams p = p0;
    const double h = 1e-6;
    const double f0 = loss(p0, x, y, r, lambda);
    double worst = 0.0;
    int checked = 0;
    for (int tries = 0; checked < n_check && tries < 20 * n_check; ++tries) {
        const std::size_t k = pick(rng);
        const double keep = theta[k];
        theta[k] = keep + h;
        p.unflatten(theta);
        const double fp = loss(p, x, y, r, lambda);
        theta[k] = keep - h;
        p.unflatten(theta);
        const double fm = loss(p, x, y, r, lambda);
        theta[k] = keep;
        const double right = (fp - f0) / h, left = (f0 - fm) / h;
        if (std::abs(right - left) > 1e-3 * std::max({std::abs(right), std::abs(left), 1e-6})) continue;
        const double num = (fp - fm) / (2 * h);
        const double denom = std::max({std::abs(num), std::abs(g[k]), 1e-7});
        worst = std::max(worst, std::abs(num - g[k]) / denom);
        ++checked;
    }
    p.unflatten(theta);
    CHECK(checked == n_check);
    return worst;
}

} // namespace

TEST_CASE("architectures have the documented layer widths") {
    CHECK(NetSpec::im2spec().layer_sizes == std::vector<int>{256, 128, 64, 16, 64, 128, 256});
    CHECK(NetSpec::spec2im().layer_sizes == std::vector<int>{256, 128, 64, 16, 64, 32, 16});
    CHECK(NetSpec::im2spec().latent_size() == 16);
    const auto mt = NetSpec::spec2im().with_reconstruction();
    CHECK(mt.recon_sizes == std::vector<int>{16, 64, 128, 256});
    CHECK(NetSpec::error_model().layer_sizes == std::vector<int>{16, 32, 1});
    CHECK(NetSpec::error_model().output == OutputMap::Softplus);
}

TEST_CASE("invalid specs and shapes are rejected") {
    NetSpec bad;
    bad.layer_sizes = {4, 2};
    CHECK_THROWS_AS(bad.validate(), ContractViolation);
    const auto p = init_params(NetSpec::spec2im(), 1);
    std::vector<double> short_input(10, 0.0);
    CHECK_THROWS_AS(forward(p, short_input), ContractViolation);
}

TEST_CASE("initialization is seeded") {
    const auto a = init_params(NetSpec::im2spec(), 5), b = init_params(NetSpec::im2spec(), 5),
               c = init_params(NetSpec::im2spec(), 6);
    CHECK(a.flatten() == b.flatten());
    CHECK(a.flatten() != c.flatten());
    CHECK(a.parameter_count() == a.flatten().size());
}

TEST_CASE("forward matches a hand-computed two-layer pass") {
    NetSpec s;
    s.layer_sizes = {2, 2, 1, 1};
    s.latent_index = 2;
    auto p = init_params(s, 1);
    p.trunk[0].w << 1, -1, 0.5, 2;
    p.trunk[0].b << 0, -1;
    p.trunk[1].w << 1, 1;
    p.trunk[1].b << 0.5;
    p.trunk[2].w << 2;
    p.trunk[2].b << 1;
    std::vector<double> in{1.0, 3.0};
    // h1 = relu([1-3, 0.5+6-1]) = [0, 5.5]; latent = relu(5.5+0.5) = 6; out = 13
    const auto f = forward(p, in);
    CHECK(f.latent(0) == doctest::Approx(6.0));
    CHECK(f.output(0) == doctest::Approx(13.0));
}

TEST_CASE("analytic gradients agree with central differences") {
    SUBCASE("im2spec") {
        const auto p = init_params(NetSpec::im2spec(), 11);
        const auto x = random_matrix(256, 4, 1), y = random_matrix(256, 4, 2, 0.3);
        CHECK(max_fd_error(p, x, y, nullptr, 0.0, 40, 3) < 1e-4);
    }
    SUBCASE("spec2im") {
        const auto p = init_params(NetSpec::spec2im(), 12);
        const auto x = random_matrix(256, 4, 4), y = random_matrix(16, 4, 5, 0.3);
        CHECK(max_fd_error(p, x, y, nullptr, 0.0, 40, 6) < 1e-4);
    }
    SUBCASE("multitask") {
        const auto p = init_params(NetSpec::spec2im().with_reconstruction(), 13);
        const auto x = random_matrix(256, 4, 7), y = random_matrix(16, 4, 8, 0.3);
        CHECK(max_fd_error(p, x, y, &x, 1.0, 40, 9) < 1e-4);
    }
    SUBCASE("error model") {
        const auto p = init_params(NetSpec::error_model(), 14);
        const Matrix x = random_matrix(16, 6, 10), y = random_matrix(1, 6, 11, 0.2).cwiseAbs();
        CHECK(max_fd_error(p, x, y, nullptr, 0.0, 40, 12) < 1e-4);
    }
}

TEST_CASE("training lowers the loss and is reproducible") {
    const auto x = random_matrix(256, 32, 20, 0.3);
    Matrix y(16, 32);
    for (int j = 0; j < 32; ++j)
        for (int i = 0; i < 16; ++i) y(i, j) = 0.5 + 0.1 * std::tanh(x(i, j) + x(i + 16, j));
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.rng_seed = 3;
    const auto p0 = init_params(NetSpec::spec2im(), 2);
    const double before = loss(p0, x, y, nullptr, 0.0);
    const auto a = train_model(p0, x, y, nullptr, cfg);
    const auto b = train_model(p0, x, y, nullptr, cfg);
    CHECK(a.loss_history.size() == 60);
    CHECK(loss(a.params, x, y, nullptr, 0.0) < 0.5 * before);
    CHECK(a.params.flatten() == b.params.flatten());
}

TEST_CASE("multitask loss adds lambda times the reconstruction error") {
    const auto p = init_params(NetSpec::spec2im().with_reconstruction(), 4);
    const auto x = random_matrix(256, 3, 30), y = random_matrix(16, 3, 31);
    const auto fb = forward_batch(p, x);
    const double pred = (fb.output - y).squaredNorm() / static_cast<double>(y.size());
    const double rec = (fb.recon - x).squaredNorm() / static_cast<double>(x.size());
    CHECK(loss(p, x, y, &x, 0.5) == doctest::Approx(pred + 0.5 * rec));
    CHECK_THROWS_AS(loss(p, x, y, nullptr, 0.5), ContractViolation);
}

TEST_CASE("per-sample MSE is the column mean of squared residuals") {
    Matrix a(2, 2), b(2, 2);
    a << 1, 0, 3, 0;
    b << 0, 0, 0, 2;
    const auto e = per_sample_mse(a, b);
    CHECK(e[0] == doctest::Approx(5.0));
    CHECK(e[1] == doctest::Approx(2.0));
}

TEST_CASE("error model outputs are positive and rank large errors higher") {
    const auto lat = random_matrix(16, 60, 40);
    std::vector<double> err;
    for (int j = 0; j < 60; ++j) err.push_back(1e-4 * (lat(0, j) > 0 ? 10.0 : 1.0));
    auto cfg = default_error_model_config(9);
    CHECK(cfg.learning_rate == doctest::Approx(1e-2));
    const auto m = train_error_model(lat, err, cfg);
    CHECK(m.scale == doctest::Approx(std::accumulate(err.begin(), err.end(), 0.0) / 60.0));
    const auto pred = predict_errors(m, lat);
    double hi = 0, lo = 0;
    int nhi = 0, nlo = 0;
    for (int j = 0; j < 60; ++j) {
        CHECK(pred[static_cast<std::size_t>(j)] > 0.0);
        if (lat(0, j) > 0) {
            hi += pred[static_cast<std::size_t>(j)];
            ++nhi;
        } else {
            lo += pred[static_cast<std::size_t>(j)];
            ++nlo;
        }
    }
    CHECK(hi / nhi > 2.0 * lo / nlo);
}

TEST_CASE("parameters round-trip through the binary format") {
    const auto p = init_params(NetSpec::im2spec().with_reconstruction(), 8);
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    write_params_binary(ss, p);
    const auto back = read_params(shape_header(p), ss);
    CHECK(back.flatten() == p.flatten());
    CHECK(back.spec.recon_sizes == p.spec.recon_sizes);
    CHECK(back.input_shift.size() == 0);
}

TEST_CASE("input shift is the training mean and acts like pre-centred inputs") {
    const auto x = random_matrix(256, 12, 31, 0.2).array() + 0.4;
    const Matrix xm = x;
    const auto y = random_matrix(16, 12, 32, 0.1);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.center_inputs = true;
    const auto t = train_model(init_params(NetSpec::spec2im(), 4), xm, y, nullptr, cfg);
    REQUIRE(t.params.input_shift.size() == 256);
    CHECK(t.params.input_shift[7] == doctest::Approx(xm.row(7).mean()).epsilon(1e-12));
    // same weights, no shift, inputs centred by hand
    auto bare = t.params;
    bare.input_shift.resize(0);
    const Matrix centred = xm.colwise() - t.params.input_shift;
    CHECK((forward_batch(t.params, xm).output - forward_batch(bare, centred).output).cwiseAbs().maxCoeff() < 1e-12);
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    write_params_binary(ss, t.params);
    const auto back = read_params(shape_header(t.params), ss);
    CHECK(back.input_shift == t.params.input_shift);
    cfg.center_inputs = false;
    CHECK(train_model(init_params(NetSpec::spec2im(), 4), xm, y, nullptr, cfg).params.input_shift.size() == 0);
    auto wrong = t.params;
    wrong.input_shift.resize(3);
    CHECK_THROWS_AS(forward_batch(wrong, xm), ContractViolation);
}
