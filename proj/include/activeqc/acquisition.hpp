#pragma once
// Acquisition components, the weighted score, the quality gate and batch
// selection for the four strategies.

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aqc::acq {

using Matrix = Eigen::MatrixXd; // one latent per column

enum class Strategy { Random, Active, ActiveMT, ActiveQC };

std::string_view to_string(Strategy s);
// Accepts the canonical names case-insensitively; throws ConfigError otherwise.
Strategy strategy_from_string(std::string_view name);

enum class DistanceMode { Sum, Nearest };

struct AcquisitionWeights {
    double alpha = 0.90;
    double beta = 0.05;
    double gamma = 0.05;

    void validate() const;
};

struct AcquisitionComponents {
    std::vector<double> predicted_error;
    std::vector<double> distance;
    std::vector<double> representativeness;
};

struct AcquisitionRecord {
    std::size_t candidate = 0; // sample id
    double e_hat = std::numeric_limits<double>::quiet_NaN();
    double d = std::numeric_limits<double>::quiet_NaN();
    double r = std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    double q_hat = std::numeric_limits<double>::quiet_NaN();
    double a = 0.0;
    bool selected = false;
};

// Min-max to [0, 1]; a constant input maps to all zeros.
std::vector<double> minmax_normalize(std::span<const double> raw);

// Raw (unnormalized) latent-space distance of each candidate to the training set.
std::vector<double> raw_distance_scores(const Matrix& candidates, const Matrix& training,
                                        DistanceMode mode = DistanceMode::Sum);
std::vector<double> distance_scores(const Matrix& candidates, const Matrix& training,
                                    DistanceMode mode = DistanceMode::Sum);

// Raw mean cosine similarity to every other candidate; zero-norm latents score 0.
std::vector<double> raw_representativeness_scores(const Matrix& candidates);
std::vector<double> representativeness_scores(const Matrix& candidates);

std::vector<double> combine_scores(const AcquisitionComponents& c, const AcquisitionWeights& w);

// a_i = s_i if q_i >= tau, else 0.
std::vector<double> gate(std::span<const double> s, std::span<const double> q_hat, double tau);

struct BatchSelection {
    std::vector<std::size_t> indices; // positions into the score vector, best first
    bool shortfall = false;           // fewer than k positive scores
    bool empty() const noexcept { return indices.empty(); }
};

// Top-k positive scores; ties go to the lowest position.
BatchSelection select_batch(std::span<const double> a, std::size_t k);

// Everything one step needs to score its candidates.
struct StepContext {
    Matrix candidate_latents;
    Matrix training_latents;
    std::vector<double> predicted_error; // raw e_hat per candidate
    std::vector<double> q_hat;           // GP mean per candidate (ActiveQC)
    AcquisitionWeights weights;
    double tau = 0.90;
    DistanceMode distance_mode = DistanceMode::Sum;
    std::mt19937_64* rng = nullptr; // Random strategy only
    std::size_t n_candidates = 0;   // Random strategy only
};

struct StrategyScores {
    std::vector<double> s;
    std::vector<double> a;
    std::optional<AcquisitionComponents> components;
};

StrategyScores strategy_scores(Strategy strategy, const StepContext& ctx);

} // namespace aqc::acq
