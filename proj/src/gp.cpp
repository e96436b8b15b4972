#include "activeqc/gp.hpp"

#include "activeqc/error.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace aqc::gp {

namespace {

constexpr double kBaseJitter = 1e-8;
constexpr double kMaxJitter = 1e-4;

void check_hyper(const GPHyperparams& h) {
    if (!(h.lengthscale > 0.0) || !(h.signal_variance > 0.0) || !(h.noise_variance >= 0.0) ||
        !std::isfinite(h.prior_mean)) {
        throw ContractViolation("GP hyperparameters out of range");
    }
}

Eigen::MatrixXd kernel_matrix(std::span<const Coord> x, const GPHyperparams& h) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = h.signal_variance;
        for (Eigen::Index j = 0; j < i; ++j) {
            const double v = rbf_kernel(x[i], x[j], h);
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

} // namespace

double rbf_kernel(const Coord& a, const Coord& b, const GPHyperparams& h) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    return h.signal_variance * std::exp(-(dx * dx + dy * dy) / (2.0 * h.lengthscale * h.lengthscale));
}

GPModel gp_fit(std::span<const Coord> inputs, std::span<const double> targets,
               const GPHyperparams& hyper) {
    check_hyper(hyper);
    if (inputs.empty()) throw ContractViolation("gp_fit needs at least one training point");
    if (inputs.size() != targets.size()) throw ContractViolation("gp_fit: inputs/targets length mismatch");

    GPModel m;
    m.inputs.assign(inputs.begin(), inputs.end());
    m.targets.assign(targets.begin(), targets.end());
    m.hyper = hyper;

    const Eigen::MatrixXd k = kernel_matrix(inputs, hyper);
    const auto n = k.rows();
    for (double jitter = kBaseJitter; jitter <= kMaxJitter * (1.0 + 1e-9); jitter *= 10.0) {
        Eigen::MatrixXd reg = k;
        reg.diagonal().array() += hyper.noise_variance + jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(reg);
        if (llt.info() != Eigen::Success) continue;
        Eigen::MatrixXd l = llt.matrixL();
        if (!l.allFinite() || (l.diagonal().array() <= 0.0).any()) continue;
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) y[i] = targets[static_cast<std::size_t>(i)] - hyper.prior_mean;
        m.jitter = jitter;
        m.chol = std::move(l);
        m.alpha = llt.solve(y);
        return m;
    }
    throw IllConditionedError("GP covariance is not positive definite after jitter escalation");
}

Prediction gp_predict(const GPModel& model, std::span<const Coord> query) {
    const auto n = static_cast<Eigen::Index>(model.inputs.size());
    Prediction out;
    out.mean.resize(query.size());
    out.variance.resize(query.size());
    Eigen::VectorXd ks(n);
    for (std::size_t q = 0; q < query.size(); ++q) {
        for (Eigen::Index i = 0; i < n; ++i) {
            ks[i] = rbf_kernel(query[q], model.inputs[static_cast<std::size_t>(i)], model.hyper);
        }
        out.mean[q] = model.hyper.prior_mean + ks.dot(model.alpha);
        const Eigen::VectorXd v = model.chol.triangularView<Eigen::Lower>().solve(ks);
        out.variance[q] = std::max(0.0, model.hyper.signal_variance - v.squaredNorm());
    }
    return out;
}

double log_marginal_likelihood(const GPModel& model) {
    const auto n = static_cast<Eigen::Index>(model.targets.size());
    double fit = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        fit += (model.targets[static_cast<std::size_t>(i)] - model.hyper.prior_mean) * model.alpha[i];
    }
    const double logdet_half = model.chol.diagonal().array().log().sum();
    return -0.5 * fit - logdet_half - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

GPHyperparams select_hyperparams(std::span<const Coord> inputs, std::span<const double> targets,
                                 std::span<const GPHyperparams> grid) {
    if (grid.empty()) throw ContractViolation("select_hyperparams: empty grid");
    bool found = false;
    double best = -std::numeric_limits<double>::infinity();
    GPHyperparams chosen = grid.front();
    for (const auto& h : grid) {
        double lml = 0.0;
        try {
            lml = log_marginal_likelihood(gp_fit(inputs, targets, h));
        } catch (const IllConditionedError&) {
            continue;
        }
        if (!std::isfinite(lml)) continue;
        if (!found || lml > best) {
            best = lml;
            chosen = h;
            found = true;
        }
    }
    if (!found) throw SelectionFailureError("no hyperparameter candidate could be fitted");
    return chosen;
}

std::vector<GPHyperparams> default_grid(const GPHyperparams& centre, double prior_mean) {
    std::vector<GPHyperparams> grid;
    grid.reserve(27);
    for (double fl : {1.0 / 3.0, 1.0, 3.0}) {
        for (double fs : {1.0 / 3.0, 1.0, 3.0}) {
            for (double fn : {0.1, 1.0, 10.0}) {
                grid.push_back({centre.lengthscale * fl, centre.signal_variance * fs,
                                centre.noise_variance * fn, prior_mean});
            }
        }
    }
    return grid;
}

nlohmann::json to_json(const GPModel& model) {
    nlohmann::json j;
    j["hyper"] = {{"lengthscale", model.hyper.lengthscale},
                  {"signal_variance", model.hyper.signal_variance},
                  {"noise_variance", model.hyper.noise_variance},
                  {"prior_mean", model.hyper.prior_mean}};
    auto& in = j["inputs"] = nlohmann::json::array();
    for (const auto& c : model.inputs) in.push_back({c[0], c[1]});
    j["targets"] = model.targets;
    return j;
}

GPModel model_from_json(const nlohmann::json& j) {
    try {
        GPHyperparams h;
        const auto& jh = j.at("hyper");
        h.lengthscale = jh.at("lengthscale").get<double>();
        h.signal_variance = jh.at("signal_variance").get<double>();
        h.noise_variance = jh.at("noise_variance").get<double>();
        h.prior_mean = jh.at("prior_mean").get<double>();
        std::vector<Coord> inputs;
        for (const auto& c : j.at("inputs")) inputs.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
        const auto targets = j.at("targets").get<std::vector<double>>();
        return gp_fit(inputs, targets, h);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("GP model JSON: ") + e.what());
    }
}

} // namespace aqc::gp
