#pragma once
// Gaussian-process regression over normalized 2-D coordinates, used to model
// the spatial spectral-quality field.

#include <Eigen/Dense>

#include <array>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace aqc::gp {

using Coord = std::array<double, 2>;

struct GPHyperparams {
    double lengthscale = 0.1;
    double signal_variance = 0.05;
    double noise_variance = 1e-4;
    double prior_mean = 0.0;
};

// Immutable fitted model. `chol` is the lower Cholesky factor of
// K + (noise + jitter) I; `alpha` solves that system against targets - prior_mean.
struct GPModel {
    std::vector<Coord> inputs;
    std::vector<double> targets;
    GPHyperparams hyper;
    double jitter = 1e-8;
    Eigen::MatrixXd chol;
    Eigen::VectorXd alpha;
};

struct Prediction {
    std::vector<double> mean;
    std::vector<double> variance;
};

double rbf_kernel(const Coord& a, const Coord& b, const GPHyperparams& h);

// Base jitter 1e-8, escalated x10 up to 1e-4 before IllConditionedError.
GPModel gp_fit(std::span<const Coord> inputs, std::span<const double> targets,
               const GPHyperparams& hyper);

Prediction gp_predict(const GPModel& model, std::span<const Coord> query);

double log_marginal_likelihood(const GPModel& model);

// Grid element with the largest evidence; earliest index wins ties.
// Throws SelectionFailureError if every candidate is ill-conditioned.
GPHyperparams select_hyperparams(std::span<const Coord> inputs, std::span<const double> targets,
                                 std::span<const GPHyperparams> grid);

// 3x3x3 log-spaced grid (factor 3) around the given centre.
std::vector<GPHyperparams> default_grid(const GPHyperparams& centre, double prior_mean);

nlohmann::json to_json(const GPModel& model);
// Refits from the serialized hyperparameters, inputs and targets.
GPModel model_from_json(const nlohmann::json& j);

} // namespace aqc::gp
