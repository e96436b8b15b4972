#include "activeqc/net.hpp"

#include "activeqc/error.hpp"
#include "activeqc/spectrum_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace aqc::net {

namespace {

// Numerically stable softplus and its derivative.
double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Cache {
    std::vector<Matrix> a;  // trunk activations, a[0] = input
    std::vector<Matrix> z;  // trunk pre-activations
    std::vector<Matrix> ra; // branch activations, ra[0] = latent
    std::vector<Matrix> rz;
};

void run_layers(const std::vector<DenseLayer>& layers, const Matrix& input, OutputMap out,
                std::vector<Matrix>& a, std::vector<Matrix>& z) {
    const std::size_t k = layers.size();
    a.resize(k + 1);
    z.resize(k);
    a[0] = input;
    for (std::size_t i = 0; i < k; ++i) {
        z[i].noalias() = layers[i].w * a[i];
        z[i].colwise() += layers[i].b;
        if (i + 1 < k) {
            a[i + 1] = z[i].cwiseMax(0.0);
        } else if (out == OutputMap::Softplus) {
            a[i + 1] = z[i].unaryExpr([](double v) { return softplus(v); });
        } else {
            a[i + 1] = z[i];
        }
    }
}

void run_forward(const ModelParams& p, const Matrix& x, Cache& c) {
    if (x.rows() != p.spec.input_size()) {
        throw ContractViolation("input width " + std::to_string(x.rows()) + " does not match network input " +
                                std::to_string(p.spec.input_size()));
    }
    if (p.input_shift.size() != 0) {
        if (p.input_shift.size() != x.rows()) throw ContractViolation("input shift width does not match the network");
        run_layers(p.trunk, x.colwise() - p.input_shift, p.spec.output, c.a, c.z);
    } else {
        run_layers(p.trunk, x, p.spec.output, c.a, c.z);
    }
    if (p.spec.multitask()) {
        run_layers(p.recon, c.a[static_cast<std::size_t>(p.spec.latent_index)], OutputMap::Identity, c.ra,
                   c.rz);
    }
}

double batch_loss(const ModelParams& p, const Cache& c, const Matrix& t, const Matrix* r, double lambda) {
    if (p.spec.multitask() && r == nullptr) throw ContractViolation("multitask loss needs reconstruction targets");
    const double n = static_cast<double>(t.cols());
    double l = (c.a.back() - t).squaredNorm() / (n * static_cast<double>(t.rows()));
    if (p.spec.multitask() && r != nullptr) {
        l += lambda * (c.ra.back() - *r).squaredNorm() / (n * static_cast<double>(r->rows()));
    }
    return l;
}

// Backprop through `layers` given dL/dz of the last layer; returns dL/d(input).
Matrix backprop(const std::vector<DenseLayer>& layers, const std::vector<Matrix>& a,
                const std::vector<Matrix>& z, Matrix dz, std::vector<DenseLayer>& grads,
                bool need_input_grad, const Matrix* extra_at = nullptr, std::size_t extra_index = 0,
                double extra_weight = 0.0) {
    const std::size_t k = layers.size();
    grads.resize(k);
    Matrix da;
    for (std::size_t i = k; i-- > 0;) {
        grads[i].w.noalias() = dz * a[i].transpose();
        grads[i].b = dz.rowwise().sum();
        if (i == 0 && !need_input_grad) break;
        da.noalias() = layers[i].w.transpose() * dz;
        if (extra_at != nullptr && i == extra_index) da += extra_weight * (*extra_at);
        if (i == 0) break;
        dz = da.cwiseProduct((z[i - 1].array() > 0.0).cast<double>().matrix());
    }
    return da;
}

void compute_grads(const ModelParams& p, const Cache& c, const Matrix& t, const Matrix* r, double lambda,
                   std::vector<DenseLayer>& g_trunk, std::vector<DenseLayer>& g_recon) {
    const double n = static_cast<double>(t.cols());
    Matrix dz = (c.a.back() - t) * (2.0 / (n * static_cast<double>(t.rows())));
    if (p.spec.output == OutputMap::Softplus) {
        dz.array() *= c.z.back().unaryExpr([](double v) { return sigmoid(v); }).array();
    }
    Matrix d_latent;
    const bool mt = p.spec.multitask() && r != nullptr;
    if (mt) {
        Matrix dzr = (c.ra.back() - *r) * (2.0 / (n * static_cast<double>(r->rows())));
        d_latent = backprop(p.recon, c.ra, c.rz, std::move(dzr), g_recon, true);
    } else if (p.spec.multitask()) {
        g_recon.resize(p.recon.size());
        for (std::size_t i = 0; i < p.recon.size(); ++i) {
            g_recon[i].w = Matrix::Zero(p.recon[i].w.rows(), p.recon[i].w.cols());
            g_recon[i].b = Vector::Zero(p.recon[i].b.size());
        }
    }
    // The latent activation a[latent_index] feeds trunk layer latent_index; its
    // gradient picks up the weighted branch term there.
    backprop(p.trunk, c.a, c.z, std::move(dz), g_trunk, false, mt ? &d_latent : nullptr,
             static_cast<std::size_t>(p.spec.latent_index), lambda);
}

std::vector<double> flatten_layers(const std::vector<DenseLayer>& trunk, const std::vector<DenseLayer>& recon) {
    std::vector<double> out;
    auto push = [&out](const std::vector<DenseLayer>& layers) {
        for (const auto& l : layers) {
            out.insert(out.end(), l.w.data(), l.w.data() + l.w.size());
            out.insert(out.end(), l.b.data(), l.b.data() + l.b.size());
        }
    };
    push(trunk);
    push(recon);
    return out;
}

std::vector<DenseLayer> make_layers(const std::vector<int>& sizes) {
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        layers.push_back({Matrix::Zero(sizes[i + 1], sizes[i]), Vector::Zero(sizes[i + 1])});
    }
    return layers;
}

void require_finite_batch(const Matrix& m, const char* what) {
    if (!m.allFinite()) throw ContractViolation(std::string(what) + " contains non-finite values");
}

} // namespace

void NetSpec::validate() const {
    if (layer_sizes.size() < 3) throw ContractViolation("network needs at least 3 layers");
    for (int s : layer_sizes) {
        if (s <= 0) throw ContractViolation("layer sizes must be positive");
    }
    if (latent_index <= 0 || latent_index >= static_cast<int>(layer_sizes.size()) - 1) {
        throw ContractViolation("latent layer must be interior");
    }
    if (!recon_sizes.empty()) {
        if (recon_sizes.size() < 2 || recon_sizes.front() != latent_size() ||
            recon_sizes.back() != input_size()) {
            throw ContractViolation("reconstruction branch must map latent width to input width");
        }
        for (int s : recon_sizes) {
            if (s <= 0) throw ContractViolation("layer sizes must be positive");
        }
    }
}

NetSpec NetSpec::im2spec(int loop_length, int patch_values) {
    NetSpec s{{patch_values, 128, 64, 16, 64, 128, loop_length}, 3, {}, OutputMap::Identity};
    s.validate();
    return s;
}

NetSpec NetSpec::spec2im(int loop_length, int patch_values) {
    NetSpec s{{loop_length, 128, 64, 16, 64, 32, patch_values}, 3, {}, OutputMap::Identity};
    s.validate();
    return s;
}

NetSpec NetSpec::with_reconstruction() const {
    NetSpec s = *this;
    s.recon_sizes = {latent_size(), 64, 128, input_size()};
    s.validate();
    return s;
}

NetSpec NetSpec::error_model(int latent) {
    NetSpec s{{latent, 32, 1}, 1, {}, OutputMap::Softplus};
    s.validate();
    return s;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : trunk) n += static_cast<std::size_t>(l.w.size() + l.b.size());
    for (const auto& l : recon) n += static_cast<std::size_t>(l.w.size() + l.b.size());
    return n;
}

std::vector<double> ModelParams::flatten() const { return flatten_layers(trunk, recon); }

void ModelParams::unflatten(std::span<const double> values) {
    if (values.size() != parameter_count()) throw ContractViolation("parameter vector has wrong length");
    std::size_t off = 0;
    auto pull = [&](std::vector<DenseLayer>& layers) {
        for (auto& l : layers) {
            std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), l.w.size(), l.w.data());
            off += static_cast<std::size_t>(l.w.size());
            std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), l.b.size(), l.b.data());
            off += static_cast<std::size_t>(l.b.size());
        }
    };
    pull(trunk);
    pull(recon);
}

void TrainConfig::validate() const {
    if (epochs <= 0 || batch_size <= 0 || !(learning_rate > 0.0) || !(multitask_weight >= 0.0)) {
        throw ContractViolation("training config: epochs, batch size and rate must be positive, lambda >= 0");
    }
}

ModelParams init_params(const NetSpec& spec, std::uint64_t seed) {
    spec.validate();
    ModelParams p;
    p.spec = spec;
    p.rng_seed = seed;
    p.trunk = make_layers(spec.layer_sizes);
    p.recon = make_layers(spec.recon_sizes);
    std::mt19937_64 rng(seed);
    auto fill = [&rng](std::vector<DenseLayer>& layers) {
        for (auto& l : layers) {
            const double lim = std::sqrt(6.0 / static_cast<double>(l.w.rows() + l.w.cols()));
            std::uniform_real_distribution<double> u(-lim, lim);
            for (Eigen::Index j = 0; j < l.w.cols(); ++j) {
                for (Eigen::Index i = 0; i < l.w.rows(); ++i) l.w(i, j) = u(rng);
            }
        }
    };
    // Trunk first so a branch never changes the trunk's draws.
    fill(p.trunk);
    fill(p.recon);
    return p;
}

BatchForward forward_batch(const ModelParams& params, const Matrix& inputs) {
    Cache c;
    run_forward(params, inputs, c);
    BatchForward out;
    out.output = std::move(c.a.back());
    out.latent = std::move(c.a[static_cast<std::size_t>(params.spec.latent_index)]);
    if (params.spec.multitask()) out.recon = std::move(c.ra.back());
    return out;
}

ForwardResult forward(const ModelParams& params, std::span<const double> input) {
    if (static_cast<int>(input.size()) != params.spec.input_size()) {
        throw ContractViolation("input length " + std::to_string(input.size()) + " does not match network input " +
                                std::to_string(params.spec.input_size()));
    }
    const Matrix x = Eigen::Map<const Matrix>(input.data(), static_cast<Eigen::Index>(input.size()), 1);
    auto b = forward_batch(params, x);
    return {b.output.col(0), b.latent.col(0)};
}

double loss(const ModelParams& params, const Matrix& inputs, const Matrix& targets, const Matrix* recon_targets,
            double lambda) {
    Cache c;
    run_forward(params, inputs, c);
    return batch_loss(params, c, targets, recon_targets, lambda);
}

std::vector<double> gradient(const ModelParams& params, const Matrix& inputs, const Matrix& targets,
                             const Matrix* recon_targets, double lambda) {
    Cache c;
    run_forward(params, inputs, c);
    std::vector<DenseLayer> gt, gr;
    compute_grads(params, c, targets, recon_targets, lambda, gt, gr);
    if (!params.spec.multitask()) gr.clear();
    return flatten_layers(gt, gr);
}

TrainResult train_model(ModelParams params, const Matrix& inputs, const Matrix& targets,
                        const Matrix* recon_targets, const TrainConfig& cfg) {
    cfg.validate();
    params.spec.validate();
    const Eigen::Index n = inputs.cols();
    if (n == 0) throw ContractViolation("training set is empty");
    if (inputs.rows() != params.spec.input_size() || targets.rows() != params.spec.output_size() ||
        targets.cols() != n) {
        throw ContractViolation("training data shape does not match network");
    }
    const bool mt = params.spec.multitask() && cfg.multitask_weight > 0.0;
    if (params.spec.multitask()) {
        if (recon_targets == nullptr || recon_targets->rows() != params.spec.input_size() ||
            recon_targets->cols() != n) {
            throw ContractViolation("multitask training needs reconstruction targets shaped like the inputs");
        }
    }
    require_finite_batch(inputs, "training inputs");
    require_finite_batch(targets, "training targets");
    // the dataset's global min-max leaves inputs in a narrow off-centre band
    if (cfg.center_inputs) params.input_shift = inputs.rowwise().mean();

    std::vector<DenseLayer> m_t = make_layers(params.spec.layer_sizes), v_t = m_t;
    std::vector<DenseLayer> m_r = make_layers(params.spec.recon_sizes), v_r = m_r;
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;

    auto adam = [&](std::vector<DenseLayer>& w, const std::vector<DenseLayer>& g, std::vector<DenseLayer>& m,
                    std::vector<DenseLayer>& v, double lr_t) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i].w = beta1 * m[i].w + (1.0 - beta1) * g[i].w;
            v[i].w = beta2 * v[i].w + (1.0 - beta2) * g[i].w.cwiseAbs2();
            w[i].w.array() -= lr_t * m[i].w.array() / (v[i].w.array().sqrt() + eps);
            m[i].b = beta1 * m[i].b + (1.0 - beta1) * g[i].b;
            v[i].b = beta2 * v[i].b + (1.0 - beta2) * g[i].b.cwiseAbs2();
            w[i].b.array() -= lr_t * m[i].b.array() / (v[i].b.array().sqrt() + eps);
        }
    };

    std::mt19937_64 rng(cfg.rng_seed);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    TrainResult out;
    out.loss_history.reserve(static_cast<std::size_t>(cfg.epochs));
    Cache c;
    Matrix xb, tb, rb;
    std::vector<DenseLayer> gt, gr;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n - start);
            xb.resize(inputs.rows(), bs);
            tb.resize(targets.rows(), bs);
            if (params.spec.multitask()) rb.resize(recon_targets->rows(), bs);
            for (Eigen::Index j = 0; j < bs; ++j) {
                const auto col = order[static_cast<std::size_t>(start + j)];
                xb.col(j) = inputs.col(col);
                tb.col(j) = targets.col(col);
                if (params.spec.multitask()) rb.col(j) = recon_targets->col(col);
            }
            const Matrix* rptr = params.spec.multitask() ? &rb : nullptr;
            run_forward(params, xb, c);
            const double l = batch_loss(params, c, tb, rptr, cfg.multitask_weight);
            if (!std::isfinite(l)) {
                throw DivergenceError("training loss became non-finite in epoch " + std::to_string(epoch), epoch);
            }
            epoch_loss += l * static_cast<double>(bs);
            compute_grads(params, c, tb, mt ? rptr : nullptr, cfg.multitask_weight, gt, gr);
            ++step;
            const double lr_t = cfg.learning_rate * std::sqrt(1.0 - std::pow(beta2, static_cast<double>(step))) /
                                (1.0 - std::pow(beta1, static_cast<double>(step)));
            adam(params.trunk, gt, m_t, v_t, lr_t);
            if (mt) adam(params.recon, gr, m_r, v_r, lr_t);
        }
        const double mean = epoch_loss / static_cast<double>(n);
        if (!std::isfinite(mean)) {
            throw DivergenceError("training loss became non-finite in epoch " + std::to_string(epoch), epoch);
        }
        out.loss_history.push_back(mean);
    }
    out.params = std::move(params);
    return out;
}

double gradient_check(const ModelParams& params, const Matrix& inputs, const Matrix& targets,
                      const Matrix* recon_targets, double lambda, const GradientCheckOptions& opts) {
    const auto analytic = gradient(params, inputs, targets, recon_targets, lambda);
    const auto base = params.flatten();
    const std::size_t total = base.size();

    auto pattern = [&](const ModelParams& p) {
        Cache c;
        run_forward(p, inputs, c);
        std::vector<bool> mask;
        auto add = [&mask](const std::vector<Matrix>& zs, std::size_t skip_last) {
            for (std::size_t i = 0; i + skip_last < zs.size(); ++i) {
                for (Eigen::Index k = 0; k < zs[i].size(); ++k) mask.push_back(zs[i].data()[k] > 0.0);
            }
        };
        add(c.z, 1);
        add(c.rz, 1);
        return mask;
    };

    std::mt19937_64 rng(opts.seed);
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    ModelParams probe = params;
    double worst = 0.0;
    int checked = 0;
    int attempts = 0;
    while (checked < opts.n_params && attempts < 100 * opts.n_params) {
        ++attempts;
        const std::size_t idx = pick(rng);
        auto v = base;
        v[idx] = base[idx] + opts.step;
        probe.unflatten(v);
        const auto mask_plus = pattern(probe);
        const double lp = loss(probe, inputs, targets, recon_targets, lambda);
        v[idx] = base[idx] - opts.step;
        probe.unflatten(v);
        const auto mask_minus = pattern(probe);
        const double lm = loss(probe, inputs, targets, recon_targets, lambda);
        if (mask_plus != mask_minus) continue;
        const double numeric = (lp - lm) / (2.0 * opts.step);
        const double denom = std::max(std::abs(numeric) + std::abs(analytic[idx]), 1e-6);
        worst = std::max(worst, std::abs(numeric - analytic[idx]) / denom);
        ++checked;
    }
    return worst;
}

TrainConfig default_error_model_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-2;
    cfg.multitask_weight = 0.0;
    cfg.rng_seed = seed;
    return cfg;
}

ErrorModel train_error_model(const Matrix& latents, std::span<const double> errors, const TrainConfig& cfg) {
    if (static_cast<std::size_t>(latents.cols()) != errors.size()) {
        throw ContractViolation("error model: one error per latent column required");
    }
    double scale = 0.0;
    for (double e : errors) {
        if (!(e >= 0.0)) throw ContractViolation("observed errors must be non-negative");
        scale += e;
    }
    scale = errors.empty() ? 0.0 : scale / static_cast<double>(errors.size());
    if (!(scale > 0.0)) scale = 1.0;
    Matrix targets(1, latents.cols());
    for (Eigen::Index i = 0; i < latents.cols(); ++i) {
        targets(0, i) = std::log1p(errors[static_cast<std::size_t>(i)] / scale);
    }
    auto params = init_params(NetSpec::error_model(static_cast<int>(latents.rows())), cfg.rng_seed);
    auto r = train_model(std::move(params), latents, targets, nullptr, cfg);
    return {std::move(r.params), std::move(r.loss_history), scale};
}

std::vector<double> predict_errors(const ErrorModel& model, const Matrix& latents) {
    const auto out = forward_batch(model.params, latents).output;
    std::vector<double> e(static_cast<std::size_t>(out.cols()));
    for (Eigen::Index i = 0; i < out.cols(); ++i) e[static_cast<std::size_t>(i)] = model.scale * std::expm1(out(0, i));
    return e;
}

std::vector<double> per_sample_mse(const Matrix& predictions, const Matrix& targets) {
    if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols()) {
        throw ContractViolation("per_sample_mse: shape mismatch");
    }
    std::vector<double> out(static_cast<std::size_t>(targets.cols()));
    for (Eigen::Index j = 0; j < targets.cols(); ++j) {
        out[static_cast<std::size_t>(j)] =
            (predictions.col(j) - targets.col(j)).squaredNorm() / static_cast<double>(targets.rows());
    }
    return out;
}

nlohmann::json shape_header(const ModelParams& params) {
    nlohmann::json j;
    j["layer_sizes"] = params.spec.layer_sizes;
    j["latent_index"] = params.spec.latent_index;
    j["recon_sizes"] = params.spec.recon_sizes;
    j["output"] = params.spec.output == OutputMap::Softplus ? "softplus" : "identity";
    j["rng_seed"] = params.rng_seed;
    j["dtype"] = "f64le";
    j["count"] = params.parameter_count();
    j["input_shift"] = params.input_shift.size(); // values follow the parameters
    return j;
}

void write_params_binary(std::ostream& os, const ModelParams& params) {
    for (double v : params.flatten()) sho::write_f64_le(os, v);
    for (Eigen::Index i = 0; i < params.input_shift.size(); ++i) sho::write_f64_le(os, params.input_shift[i]);
}

ModelParams read_params(const nlohmann::json& header, std::istream& binary) {
    NetSpec spec;
    std::size_t count = 0, shift = 0;
    ModelParams p;
    try {
        spec.layer_sizes = header.at("layer_sizes").get<std::vector<int>>();
        spec.latent_index = header.at("latent_index").get<int>();
        spec.recon_sizes = header.at("recon_sizes").get<std::vector<int>>();
        const auto out = header.at("output").get<std::string>();
        if (out != "identity" && out != "softplus") throw ConfigError("unknown output map '" + out + "'");
        spec.output = out == "softplus" ? OutputMap::Softplus : OutputMap::Identity;
        p.rng_seed = header.at("rng_seed").get<std::uint64_t>();
        count = header.at("count").get<std::size_t>();
        shift = header.value("input_shift", std::size_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model header: ") + e.what());
    }
    spec.validate();
    p.spec = spec;
    p.trunk = make_layers(spec.layer_sizes);
    p.recon = make_layers(spec.recon_sizes);
    if (count != p.parameter_count()) throw ConfigError("model header count does not match shapes");
    std::vector<double> values(count);
    for (auto& v : values) v = sho::read_f64_le(binary);
    p.unflatten(values);
    if (shift != 0) {
        if (shift != static_cast<std::size_t>(spec.input_size())) throw ConfigError("model header input shift width");
        p.input_shift.resize(static_cast<Eigen::Index>(shift));
        for (Eigen::Index i = 0; i < p.input_shift.size(); ++i) p.input_shift[i] = sho::read_f64_le(binary);
    }
    return p;
}

} // namespace aqc::net
