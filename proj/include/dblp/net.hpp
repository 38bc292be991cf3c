// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dblp/schedule.hpp"
#include "dblp/tensor.hpp"

namespace dblp {

struct DenseLayer {
    RowMatrix weight;             // (in, out)
    Eigen::RowVectorXd bias;      // (out)
};

/// Activations saved by a forward pass, consumed by backward.
struct MlpCache {
    std::vector<RowMatrix> inputs;        // input to each layer
    std::vector<RowMatrix> preactivations;  // pre-activation of each hidden layer
};

/// Multilayer perceptron: SiLU between layers, linear output.
///
/// Doubles as a parameter set (live parameters, gradients, EMA shadow and
/// optimizer state all share this layout).
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<DenseLayer> layers);

    /// Layer widths {in, h1, ..., out}. Weights ~ N(0, 1/fan_in); biases zero.
    static Mlp create(std::span<const int> widths, Rng& rng, bool zero_output_layer = false);

    RowMatrix forward(const RowMatrix& x, MlpCache* cache = nullptr) const;

    /// Parameter gradients for upstream gradient `grad_output` (batch, out).
    /// When `grad_input` is non-null it receives d/dx (batch, in).
    Mlp backward(const MlpCache& cache, const RowMatrix& grad_output, RowMatrix* grad_input = nullptr) const;

    std::size_t input_width() const;
    std::size_t output_width() const;
    std::size_t parameter_count() const;
    std::vector<DenseLayer>& layers() noexcept { return layers_; }
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

    Mlp zeros_like() const;
    bool same_layout(const Mlp& other) const;
    /// Throws ShapeError when the layouts differ.
    void require_same_layout(const Mlp& other, const char* what) const;

    /// this += scale * other.
    void add_scaled(const Mlp& other, double scale);
    void scale(double factor);

    /// Parameters in checkpoint order: for each layer, weight row-major then bias.
    std::vector<double> flatten() const;
    void assign_flat(std::span<const double> values);

    bool all_finite() const;

private:
    std::vector<DenseLayer> layers_;
};

double silu(double x);
double silu_derivative(double x);

/// Sinusoidal embedding of a (scalar) timestep: sin(t f_i) then cos(t f_i),
/// f_i = 10000^(-i / (width/2)).
void time_embedding(double t, std::span<double> out);

/// c_skip(t) = s^2 / (tau^2 + s^2), c_out(t) = tau / sqrt(tau^2 + s^2) with
/// tau = time_scale * t and s = sigma_data. c_skip(0) = 1 and c_out(0) = 0.
struct SkipParams {
    double sigma_data = 0.5;
    double time_scale = 10.0;
};

struct SkipScales {
    double c_skip = 1.0;
    double c_out = 0.0;
};

SkipScales skip_scales(int t, const SkipParams& params);

/// Fixed per-coordinate Gaussian prior of the data. For x ~ N(mean, var) the
/// noise posterior mean is E[eps | z_t] = g_t (z - sqrt(ab_t) mean) with
/// g_t = sigma_t / (ab_t var + sigma_t^2). Holds no trainable parameters.
struct GaussianBaseline {
    std::vector<double> mean;
    std::vector<double> var;
    std::vector<double> alpha_bar;  // per timestep

    static GaussianBaseline fit(const Tensor& x, const NoiseSchedule& schedule);
};

/// Epsilon-prediction network over [z | time embedding | condition].
///
/// With a GaussianBaseline attached the output is baseline + MLP, so the MLP
/// only models the non-Gaussian residual.
class DenoiserNet {
public:
    DenoiserNet() = default;

    static DenoiserNet create(int data_dim, int time_embed_dim, int cond_dim, std::span<const int> hidden,
                              Rng& rng, bool zero_output_layer = false);

    /// Copy of `base` with `cond_dim` extra inputs whose first-layer weights are zero,
    /// so the copy initially ignores the condition and reproduces `base` exactly.
    static DenoiserNet with_condition_inputs(const DenoiserNet& base, int cond_dim);

    int data_dim() const noexcept { return data_dim_; }
    int time_embed_dim() const noexcept { return time_embed_dim_; }
    int cond_dim() const noexcept { return cond_dim_; }
    const SkipParams& skip_params() const noexcept { return skip_; }
    void set_skip_params(const SkipParams& p) noexcept { skip_ = p; }

    Mlp& params() noexcept { return mlp_; }
    const Mlp& params() const noexcept { return mlp_; }

    const std::optional<GaussianBaseline>& baseline() const noexcept { return baseline_; }
    /// Throws ShapeError when the baseline does not match data_dim.
    void set_baseline(std::optional<GaussianBaseline> b);

    long trained_iterations() const noexcept { return trained_iterations_; }
    void add_trained_iterations(long n) noexcept { trained_iterations_ += n; }

    /// Predicted noise, shaped like z. `cond` must be present iff cond_dim > 0
    /// (rows match z; a row of zeros is the null condition).
    Tensor forward(const Tensor& z, std::span<const int> timesteps, const Tensor* cond = nullptr,
                   MlpCache* cache = nullptr) const;
    Tensor forward(const Tensor& z, int t, const Tensor* cond = nullptr, MlpCache* cache = nullptr) const;

    /// Parameter gradients for d loss / d eps_hat (shaped like the forward output).
    Mlp backward(const MlpCache& cache, const Tensor& grad_eps) const;

private:
    RowMatrix assemble_input(const Tensor& z, std::span<const int> timesteps, const Tensor* cond) const;

    int data_dim_ = 0;
    int time_embed_dim_ = 0;
    int cond_dim_ = 0;
    SkipParams skip_;
    long trained_iterations_ = 0;
    Mlp mlp_;
    std::optional<GaussianBaseline> baseline_;
};

/// f(z, c, t) = c_skip z + c_out (z - sigma_t eps_hat) / sqrt(ab_t). Returns z
/// itself at t = 0. When `cache` is given, the network activations are kept for
/// `consistency_backward`.
Tensor consistency_apply(const DenoiserNet& net, const Tensor& z, std::span<const int> timesteps,
                         const Tensor* cond, const NoiseSchedule& schedule, MlpCache* cache = nullptr);
Tensor consistency_apply(const DenoiserNet& net, const Tensor& z, int t, const Tensor* cond,
                         const NoiseSchedule& schedule, MlpCache* cache = nullptr);

/// Parameter gradients of a loss given d loss / d f at the consistency output.
Mlp consistency_backward(const DenoiserNet& net, const MlpCache& cache, const Tensor& grad_f,
                         std::span<const int> timesteps, const NoiseSchedule& schedule);

/// Target parameters theta^- following the live network by exponential moving average.
struct EmaState {
    DenoiserNet shadow;
    double rate = 0.95;
};

EmaState make_ema(const DenoiserNet& live, double rate);
/// shadow <- rate * shadow + (1 - rate) * live. The shadow never receives gradients.
void ema_update(EmaState& ema, const DenoiserNet& live);

/// Plain SGD with optional heavy-ball momentum.
class Sgd {
public:
    Sgd(double learning_rate, double momentum = 0.0) : lr_(learning_rate), momentum_(momentum) {}
    void step(Mlp& params, const Mlp& grads);

private:
    double lr_;
    double momentum_;
    std::optional<Mlp> velocity_;
};

/// Checkpoint: `<stem>.bin` holds every parameter as little-endian float64,
/// `<stem>.json` describes layer shapes, architecture and producing config.
void save_denoiser(const DenoiserNet& net, const std::filesystem::path& stem, const nlohmann::json& config);
DenoiserNet load_denoiser(const std::filesystem::path& stem);

nlohmann::json mlp_layout_json(const Mlp& mlp);
Mlp mlp_from_layout(const nlohmann::json& layout);

}  // namespace dblp
