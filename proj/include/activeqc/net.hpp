#pragma once
// Dense encoder-decoder networks (Im2Spec, Spec2Im, multitask variant and the
// surrogate error model) with hand-written backpropagation and Adam.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace aqc::net {

using Matrix = Eigen::MatrixXd; // column per sample
using Vector = Eigen::VectorXd;

enum class OutputMap { Identity, Softplus };

struct NetSpec {
    std::vector<int> layer_sizes; // input -> ... -> output
    int latent_index = 0;         // layer_sizes index of the latent layer
    std::vector<int> recon_sizes; // optional branch: latent width -> ... -> input width
    OutputMap output = OutputMap::Identity;

    // Throws ContractViolation unless there are >= 3 layers, every size is
    // positive, the latent layer is interior and any branch matches the
    // latent/input widths.
    void validate() const;

    int input_size() const { return layer_sizes.front(); }
    int output_size() const { return layer_sizes.back(); }
    int latent_size() const { return layer_sizes[static_cast<std::size_t>(latent_index)]; }
    bool multitask() const { return !recon_sizes.empty(); }

    static NetSpec im2spec(int loop_length = 256, int patch_values = 256);
    static NetSpec spec2im(int loop_length = 256, int patch_values = 16);
    // Adds the mirror decoder latent -> 64 -> 128 -> input.
    NetSpec with_reconstruction() const;
    static NetSpec error_model(int latent = 16);
};

struct DenseLayer {
    Matrix w; // out x in
    Vector b;
};

struct ModelParams {
    NetSpec spec;
    std::vector<DenseLayer> trunk;
    std::vector<DenseLayer> recon;
    std::uint64_t rng_seed = 0;
    Vector input_shift; // fixed, subtracted from inputs before the first layer; empty = none

    std::size_t parameter_count() const;
    // Flat views in trunk-then-branch order, weights (column-major) before biases per layer.
    std::vector<double> flatten() const;
    void unflatten(std::span<const double> values);
};

struct TrainConfig {
    int epochs = 200;
    int batch_size = 8;
    double learning_rate = 1e-3;
    double multitask_weight = 1.0; // lambda
    std::uint64_t rng_seed = 0;
    bool center_inputs = false; // set input_shift to the training-input mean

    void validate() const;
};

struct ForwardResult {
    Vector output;
    Vector latent;
};

struct BatchForward {
    Matrix output;
    Matrix latent;
    Matrix recon; // empty unless the NetSpec has a reconstruction branch
};

struct TrainResult {
    ModelParams params;
    std::vector<double> loss_history; // per-epoch mean batch loss
};

ModelParams init_params(const NetSpec& spec, std::uint64_t seed);

ForwardResult forward(const ModelParams& params, std::span<const double> input);
BatchForward forward_batch(const ModelParams& params, const Matrix& inputs);

// Mean-squared prediction loss + lambda * mean-squared reconstruction loss.
// `recon_targets` is required for a multitask NetSpec.
double loss(const ModelParams& params, const Matrix& inputs, const Matrix& targets,
            const Matrix* recon_targets, double lambda);

// Analytic gradient of `loss`, laid out like ModelParams::flatten().
std::vector<double> gradient(const ModelParams& params, const Matrix& inputs, const Matrix& targets,
                             const Matrix* recon_targets, double lambda);

TrainResult train_model(ModelParams params, const Matrix& inputs, const Matrix& targets,
                        const Matrix* recon_targets, const TrainConfig& cfg);

struct GradientCheckOptions {
    int n_params = 50;
    double step = 1e-5;
    std::uint64_t seed = 7;
};

// Largest relative difference between analytic and central-difference
// gradients over randomly chosen parameters. Parameters whose perturbation
// flips a rectifier are skipped and redrawn.
double gradient_check(const ModelParams& params, const Matrix& inputs, const Matrix& targets,
                      const Matrix* recon_targets, double lambda,
                      const GradientCheckOptions& opts = {});

// Surrogate error model: latent -> 32 -> 1 with softplus output, trained on
// log(1 + error / scale) where scale is the mean observed error.
struct ErrorModel {
    ModelParams params;
    std::vector<double> loss_history;
    double scale = 1.0;
};

TrainConfig default_error_model_config(std::uint64_t seed);

ErrorModel train_error_model(const Matrix& latents, std::span<const double> errors,
                             const TrainConfig& cfg);
std::vector<double> predict_errors(const ErrorModel& model, const Matrix& latents);

// Per-sample mean-squared error (one value per column).
std::vector<double> per_sample_mse(const Matrix& predictions, const Matrix& targets);

nlohmann::json shape_header(const ModelParams& params);
void write_params_binary(std::ostream& os, const ModelParams& params);
ModelParams read_params(const nlohmann::json& header, std::istream& binary);

} // namespace aqc::net
