#include "activeqc/acquisition.hpp"

#include "activeqc/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

namespace aqc::acq {

std::string_view to_string(Strategy s) {
    switch (s) {
    case Strategy::Random: return "Random";
    case Strategy::Active: return "Active";
    case Strategy::ActiveMT: return "ActiveMT";
    case Strategy::ActiveQC: return "ActiveQC";
    }
    return "?";
}

Strategy strategy_from_string(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "random") return Strategy::Random;
    if (lower == "active") return Strategy::Active;
    if (lower == "activemt") return Strategy::ActiveMT;
    if (lower == "activeqc") return Strategy::ActiveQC;
    throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

void AcquisitionWeights::validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
        throw ConfigError("acquisition weights must be non-negative");
    }
    if (alpha == 0.0 && beta == 0.0 && gamma == 0.0) throw ConfigError("acquisition weights are all zero");
}

std::vector<double> minmax_normalize(std::span<const double> raw) {
    std::vector<double> out(raw.size(), 0.0);
    if (raw.empty()) return out;
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    const double span = *hi - *lo;
    if (!(span > 0.0)) return out;
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / span;
    return out;
}

std::vector<double> raw_distance_scores(const Matrix& candidates, const Matrix& training, DistanceMode mode) {
    if (training.cols() == 0) throw ContractViolation("distance_scores: training set is empty");
    if (candidates.rows() != training.rows()) throw ContractViolation("distance_scores: latent width mismatch");
    std::vector<double> d(static_cast<std::size_t>(candidates.cols()));
    for (Eigen::Index i = 0; i < candidates.cols(); ++i) {
        double acc = mode == DistanceMode::Sum ? 0.0 : std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < training.cols(); ++j) {
            const double dist = (candidates.col(i) - training.col(j)).norm();
            acc = mode == DistanceMode::Sum ? acc + dist : std::min(acc, dist);
        }
        d[static_cast<std::size_t>(i)] = acc;
    }
    return d;
}

std::vector<double> distance_scores(const Matrix& candidates, const Matrix& training, DistanceMode mode) {
    return minmax_normalize(raw_distance_scores(candidates, training, mode));
}

std::vector<double> raw_representativeness_scores(const Matrix& candidates) {
    const Eigen::Index n = candidates.cols();
    std::vector<double> r(static_cast<std::size_t>(n), 0.0);
    if (n < 2) return r;
    Matrix unit = candidates;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double norm = unit.col(i).norm();
        if (norm > 0.0) {
            unit.col(i) /= norm;
        } else {
            unit.col(i).setZero();
        }
    }
    // Row sums of the cosine Gram matrix without forming it: u_i . sum_j u_j - u_i . u_i.
    const Eigen::VectorXd total = unit.rowwise().sum();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double self = unit.col(i).squaredNorm();
        r[static_cast<std::size_t>(i)] = (unit.col(i).dot(total) - self) / static_cast<double>(n - 1);
    }
    return r;
}

std::vector<double> representativeness_scores(const Matrix& candidates) {
    return minmax_normalize(raw_representativeness_scores(candidates));
}

std::vector<double> combine_scores(const AcquisitionComponents& c, const AcquisitionWeights& w) {
    const std::size_t n = c.predicted_error.size();
    if (c.distance.size() != n || c.representativeness.size() != n) {
        throw ContractViolation("combine_scores: component length mismatch");
    }
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = w.alpha * c.predicted_error[i] + w.beta * c.distance[i] + w.gamma * c.representativeness[i];
    }
    return s;
}

std::vector<double> gate(std::span<const double> s, std::span<const double> q_hat, double tau) {
    if (s.size() != q_hat.size()) throw ContractViolation("gate: score/quality length mismatch");
    std::vector<double> a(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) a[i] = q_hat[i] >= tau ? s[i] : 0.0;
    return a;
}

BatchSelection select_batch(std::span<const double> a, std::size_t k) {
    if (k == 0) throw ContractViolation("select_batch: k must be >= 1");
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > 0.0) eligible.push_back(i);
    }
    BatchSelection out;
    const std::size_t take = std::min(k, eligible.size());
    std::partial_sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(take), eligible.end(),
                      [&a](std::size_t x, std::size_t y) { return a[x] > a[y] || (a[x] == a[y] && x < y); });
    out.indices.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(take));
    out.shortfall = take < k;
    return out;
}

StrategyScores strategy_scores(Strategy strategy, const StepContext& ctx) {
    StrategyScores out;
    if (strategy == Strategy::Random) {
        if (ctx.rng == nullptr) throw ContractViolation("Random strategy needs the trial RNG");
        std::uniform_real_distribution<double> u(0.0, 1.0);
        out.s.resize(ctx.n_candidates);
        // 1 - u lies in (0, 1], so every candidate stays eligible.
        for (auto& v : out.s) v = 1.0 - u(*ctx.rng);
        out.a = out.s;
        return out;
    }
    const auto n = static_cast<std::size_t>(ctx.candidate_latents.cols());
    if (ctx.predicted_error.size() != n) throw ContractViolation("strategy_scores: one e_hat per candidate required");
    ctx.weights.validate();
    AcquisitionComponents c;
    c.predicted_error = minmax_normalize(ctx.predicted_error);
    c.distance = distance_scores(ctx.candidate_latents, ctx.training_latents, ctx.distance_mode);
    c.representativeness = representativeness_scores(ctx.candidate_latents);
    out.s = combine_scores(c, ctx.weights);
    if (strategy == Strategy::ActiveQC) {
        out.a = gate(out.s, ctx.q_hat, ctx.tau);
    } else {
        out.a = out.s;
    }
    out.components = std::move(c);
    return out;
}

} // namespace aqc::acq
