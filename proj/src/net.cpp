// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include "dblp/net.hpp"

#include <cmath>
#include <string>

#include "dblp/errors.hpp"
#include "dblp/io.hpp"

namespace dblp {

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (layers_[l].bias.size() != layers_[l].weight.cols()) throw ShapeError("bias width != layer output width");
        if (l > 0 && layers_[l].weight.rows() != layers_[l - 1].weight.cols()) {
            throw ShapeError("layer " + std::to_string(l) + " input width does not match previous output");
        }
    }
}

Mlp Mlp::create(std::span<const int> widths, Rng& rng, bool zero_output_layer) {
    if (widths.size() < 2) throw ShapeError("an MLP needs at least input and output widths");
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const int in = widths[l];
        const int out = widths[l + 1];
        if (in <= 0 || out <= 0) throw ShapeError("layer widths must be positive");
        DenseLayer layer{RowMatrix(in, out), Eigen::RowVectorXd::Zero(out)};
        const bool zero = zero_output_layer && l + 2 == widths.size();
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
            layer.weight.data()[i] = zero ? 0.0 : scale * rng.normal();
        }
        layers.push_back(std::move(layer));
    }
    return Mlp(std::move(layers));
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_derivative(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

RowMatrix Mlp::forward(const RowMatrix& x, MlpCache* cache) const {
    if (layers_.empty()) throw ShapeError("empty network");
    if (static_cast<std::size_t>(x.cols()) != input_width()) {
        throw ShapeError("network input has width " + std::to_string(x.cols()) + ", expected " +
                         std::to_string(input_width()));
    }
    if (cache) {
        cache->inputs.clear();
        cache->preactivations.clear();
    }
    RowMatrix a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        RowMatrix z = a * layers_[l].weight;
        z.rowwise() += layers_[l].bias;
        if (cache) cache->inputs.push_back(std::move(a));
        if (l + 1 == layers_.size()) return z;
        a = z.unaryExpr([](double v) { return silu(v); });
        if (cache) cache->preactivations.push_back(std::move(z));
    }
    return a;
}

Mlp Mlp::backward(const MlpCache& cache, const RowMatrix& grad_output, RowMatrix* grad_input) const {
    if (cache.inputs.size() != layers_.size() || cache.preactivations.size() + 1 != layers_.size()) {
        throw StageError("backward called without a matching forward cache");
    }
    if (grad_output.rows() != cache.inputs.front().rows() ||
        static_cast<std::size_t>(grad_output.cols()) != output_width()) {
        throw ShapeError("upstream gradient shape does not match network output");
    }
    Mlp grads = zeros_like();
    RowMatrix g = grad_output;
    for (std::size_t idx = layers_.size(); idx-- > 0;) {
        if (idx + 1 < layers_.size()) {
            g.array() *= cache.preactivations[idx].unaryExpr([](double v) { return silu_derivative(v); }).array();
        }
        grads.layers_[idx].weight.noalias() = cache.inputs[idx].transpose() * g;
        grads.layers_[idx].bias = g.colwise().sum();
        if (idx > 0 || grad_input) {
            RowMatrix next = g * layers_[idx].weight.transpose();
            g = std::move(next);
        }
    }
    if (grad_input) *grad_input = std::move(g);
    return grads;
}

std::size_t Mlp::input_width() const {
    return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.rows());
}

std::size_t Mlp::output_width() const {
    return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.cols());
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

Mlp Mlp::zeros_like() const {
    std::vector<DenseLayer> layers;
    layers.reserve(layers_.size());
    for (const auto& l : layers_) {
        layers.push_back({RowMatrix::Zero(l.weight.rows(), l.weight.cols()), Eigen::RowVectorXd::Zero(l.bias.size())});
    }
    Mlp out;
    out.layers_ = std::move(layers);
    return out;
}

bool Mlp::same_layout(const Mlp& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (layers_[l].weight.rows() != other.layers_[l].weight.rows() ||
            layers_[l].weight.cols() != other.layers_[l].weight.cols() ||
            layers_[l].bias.size() != other.layers_[l].bias.size()) {
            return false;
        }
    }
    return true;
}

void Mlp::require_same_layout(const Mlp& other, const char* what) const {
    if (!same_layout(other)) throw ShapeError(std::string(what) + ": parameter layouts differ");
}

void Mlp::add_scaled(const Mlp& other, double scale) {
    require_same_layout(other, "add_scaled");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        layers_[l].weight += scale * other.layers_[l].weight;
        layers_[l].bias += scale * other.layers_[l].bias;
    }
}

void Mlp::scale(double factor) {
    for (auto& l : layers_) {
        l.weight *= factor;
        l.bias *= factor;
    }
}

std::vector<double> Mlp::flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& l : layers_) {
        out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
        out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return out;
}

void Mlp::assign_flat(std::span<const double> values) {
    if (values.size() != parameter_count()) {
        throw ShapeError("flat parameter vector has " + std::to_string(values.size()) + " entries, expected " +
                         std::to_string(parameter_count()));
    }
    std::size_t pos = 0;
    for (auto& l : layers_) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), l.weight.size(), l.weight.data());
        pos += static_cast<std::size_t>(l.weight.size());
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), l.bias.size(), l.bias.data());
        pos += static_cast<std::size_t>(l.bias.size());
    }
}

bool Mlp::all_finite() const {
    for (const auto& l : layers_) {
        if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Embedding and skip scales

void time_embedding(double t, std::span<double> out) {
    const std::size_t half = out.size() / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        out[i] = std::sin(t * freq);
        out[half + i] = std::cos(t * freq);
    }
    if (out.size() % 2 == 1) out.back() = 0.0;
}

SkipScales skip_scales(int t, const SkipParams& params) {
    if (t == 0) return {1.0, 0.0};
    const double tau = params.time_scale * static_cast<double>(t);
    const double s2 = params.sigma_data * params.sigma_data;
    return {s2 / (tau * tau + s2), tau / std::sqrt(tau * tau + s2)};
}

// ---------------------------------------------------------------------------
// DenoiserNet

DenoiserNet DenoiserNet::create(int data_dim, int time_embed_dim, int cond_dim, std::span<const int> hidden,
                                Rng& rng, bool zero_output_layer) {
    if (data_dim <= 0) throw ConfigError("net.data_dim", "must be positive");
    if (time_embed_dim < 0) throw ConfigError("net.time_embed_dim", "must be non-negative");
    if (cond_dim < 0) throw ConfigError("net.cond_dim", "must be non-negative");
    std::vector<int> widths;
    widths.push_back(data_dim + time_embed_dim + cond_dim);
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(data_dim);
    DenoiserNet net;
    net.data_dim_ = data_dim;
    net.time_embed_dim_ = time_embed_dim;
    net.cond_dim_ = cond_dim;
    net.mlp_ = Mlp::create(widths, rng, zero_output_layer);
    return net;
}

DenoiserNet DenoiserNet::with_condition_inputs(const DenoiserNet& base, int cond_dim) {
    if (base.cond_dim_ != 0) throw ShapeError("base network is already conditioned");
    DenoiserNet net = base;
    net.cond_dim_ = cond_dim;
    if (cond_dim > 0) {
        RowMatrix& w = net.mlp_.layers().front().weight;
        RowMatrix widened = RowMatrix::Zero(w.rows() + cond_dim, w.cols());
        widened.topRows(w.rows()) = w;
        w = std::move(widened);
    }
    return net;
}

RowMatrix DenoiserNet::assemble_input(const Tensor& z, std::span<const int> timesteps, const Tensor* cond) const {
    const auto batch = static_cast<Eigen::Index>(z.rows());
    if (z.row_size() != static_cast<std::size_t>(data_dim_)) {
        throw ShapeError("denoiser input has " + std::to_string(z.row_size()) + " features, expected " +
                         std::to_string(data_dim_));
    }
    if (timesteps.size() != z.rows()) throw ShapeError("one timestep per batch row required");
    if (cond_dim_ > 0) {
        if (!cond) throw ShapeError("conditioned network called without a condition");
        if (cond->rows() != z.rows() || cond->row_size() != static_cast<std::size_t>(cond_dim_)) {
            throw ShapeError("condition shape " + shape_string(cond->shape()) + " does not match network");
        }
    } else if (cond && !cond->empty()) {
        throw ShapeError("unconditioned network given a condition");
    }

    RowMatrix x(batch, data_dim_ + time_embed_dim_ + cond_dim_);
    x.leftCols(data_dim_) = z.matrix();
    if (time_embed_dim_ > 0) {
        std::vector<double> emb(static_cast<std::size_t>(time_embed_dim_));
        for (Eigen::Index r = 0; r < batch; ++r) {
            time_embedding(static_cast<double>(timesteps[static_cast<std::size_t>(r)]), emb);
            for (int j = 0; j < time_embed_dim_; ++j) x(r, data_dim_ + j) = emb[static_cast<std::size_t>(j)];
        }
    }
    if (cond_dim_ > 0) x.rightCols(cond_dim_) = cond->matrix();
    return x;
}

GaussianBaseline GaussianBaseline::fit(const Tensor& x, const NoiseSchedule& schedule) {
    if (x.rows() == 0) throw ShapeError("baseline needs at least one example");
    const RowMatrix m = x.matrix();
    GaussianBaseline b;
    const Eigen::RowVectorXd mean = m.colwise().mean();
    const Eigen::RowVectorXd var = (m.rowwise() - mean).array().square().colwise().mean();
    b.mean.assign(mean.data(), mean.data() + mean.size());
    b.var.assign(var.data(), var.data() + var.size());
    b.alpha_bar.assign(schedule.alpha_bars().begin(), schedule.alpha_bars().end());
    return b;
}

void DenoiserNet::set_baseline(std::optional<GaussianBaseline> b) {
    if (b && (b->mean.size() != static_cast<std::size_t>(data_dim_) || b->var.size() != b->mean.size() ||
              b->alpha_bar.empty())) {
        throw ShapeError("baseline does not match the network's data dimension");
    }
    baseline_ = std::move(b);
}

Tensor DenoiserNet::forward(const Tensor& z, std::span<const int> timesteps, const Tensor* cond,
                            MlpCache* cache) const {
    const RowMatrix out = mlp_.forward(assemble_input(z, timesteps, cond), cache);
    Tensor eps = Tensor::zeros_like(z);
    eps.matrix() = out;
    if (baseline_) {
        const std::size_t d = z.row_size();
        for (std::size_t r = 0; r < z.rows(); ++r) {
            const auto t = static_cast<std::size_t>(timesteps[r]);
            if (t >= baseline_->alpha_bar.size()) throw DomainError("timestep outside the baseline schedule");
            const double a = baseline_->alpha_bar[t];
            const double sa = std::sqrt(a), s = std::sqrt(1.0 - a);
            for (std::size_t j = 0; j < d; ++j) {
                const double g = s / (a * baseline_->var[j] + (1.0 - a));
                eps[r * d + j] += g * (z[r * d + j] - sa * baseline_->mean[j]);
            }
        }
    }
    return eps;
}

Tensor DenoiserNet::forward(const Tensor& z, int t, const Tensor* cond, MlpCache* cache) const {
    const std::vector<int> ts(z.rows(), t);
    return forward(z, ts, cond, cache);
}

Mlp DenoiserNet::backward(const MlpCache& cache, const Tensor& grad_eps) const {
    return mlp_.backward(cache, grad_eps.matrix());
}

// ---------------------------------------------------------------------------
// Consistency parameterization

Tensor consistency_apply(const DenoiserNet& net, const Tensor& z, std::span<const int> timesteps,
                         const Tensor* cond, const NoiseSchedule& schedule, MlpCache* cache) {
    for (int t : timesteps) schedule.require_timestep(t);
    const Tensor eps = net.forward(z, timesteps, cond, cache);
    Tensor out = Tensor::zeros_like(z);
    const std::size_t n = z.row_size();
    for (std::size_t r = 0; r < z.rows(); ++r) {
        const int t = timesteps[r];
        const SkipScales s = skip_scales(t, net.skip_params());
        if (s.c_out == 0.0) {
            // Boundary: return the input untouched (also avoids -0 + 0 flipping signs).
            std::copy_n(z.row(r).begin(), n, out.row(r).begin());
            continue;
        }
        const double sigma = schedule.sigma(t);
        const double scale = schedule.sqrt_alpha_bar(t);
        for (std::size_t j = r * n; j < (r + 1) * n; ++j) {
            out[j] = s.c_skip * z[j] + s.c_out * (z[j] - sigma * eps[j]) / scale;
        }
    }
    return out;
}

Tensor consistency_apply(const DenoiserNet& net, const Tensor& z, int t, const Tensor* cond,
                         const NoiseSchedule& schedule, MlpCache* cache) {
    const std::vector<int> ts(z.rows(), t);
    return consistency_apply(net, z, ts, cond, schedule, cache);
}

Mlp consistency_backward(const DenoiserNet& net, const MlpCache& cache, const Tensor& grad_f,
                         std::span<const int> timesteps, const NoiseSchedule& schedule) {
    if (timesteps.size() != grad_f.rows()) throw ShapeError("one timestep per batch row required");
    Tensor grad_eps = Tensor::zeros_like(grad_f);
    const std::size_t n = grad_f.row_size();
    for (std::size_t r = 0; r < grad_f.rows(); ++r) {
        const int t = timesteps[r];
        const SkipScales s = skip_scales(t, net.skip_params());
        const double d = s.c_out == 0.0 ? 0.0 : -s.c_out * schedule.sigma(t) / schedule.sqrt_alpha_bar(t);
        for (std::size_t j = r * n; j < (r + 1) * n; ++j) grad_eps[j] = d * grad_f[j];
    }
    return net.backward(cache, grad_eps);
}

// ---------------------------------------------------------------------------
// EMA and optimizer

EmaState make_ema(const DenoiserNet& live, double rate) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("distill.ema_rate", "must lie in [0, 1]");
    return {live, rate};
}

void ema_update(EmaState& ema, const DenoiserNet& live) {
    ema.shadow.params().require_same_layout(live.params(), "ema_update");
    const double mu = ema.rate;
    auto& shadow = ema.shadow.params().layers();
    const auto& current = live.params().layers();
    for (std::size_t l = 0; l < shadow.size(); ++l) {
        shadow[l].weight = mu * shadow[l].weight + (1.0 - mu) * current[l].weight;
        shadow[l].bias = mu * shadow[l].bias + (1.0 - mu) * current[l].bias;
    }
}

void Sgd::step(Mlp& params, const Mlp& grads) {
    if (momentum_ == 0.0) {
        params.add_scaled(grads, -lr_);
        return;
    }
    if (!velocity_) velocity_ = grads.zeros_like();
    velocity_->scale(momentum_);
    velocity_->add_scaled(grads, 1.0);
    params.add_scaled(*velocity_, -lr_);
}

// ---------------------------------------------------------------------------
// Checkpoints

nlohmann::json mlp_layout_json(const Mlp& mlp) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : mlp.layers()) {
        layers.push_back({{"weight", {l.weight.rows(), l.weight.cols()}}, {"bias", {l.bias.size()}}});
    }
    return layers;
}

Mlp mlp_from_layout(const nlohmann::json& layout) {
    std::vector<DenseLayer> layers;
    for (const auto& l : layout) {
        const auto in = l.at("weight").at(0).get<Eigen::Index>();
        const auto out = l.at("weight").at(1).get<Eigen::Index>();
        layers.push_back({RowMatrix::Zero(in, out), Eigen::RowVectorXd::Zero(out)});
    }
    return Mlp(std::move(layers));
}

void save_denoiser(const DenoiserNet& net, const std::filesystem::path& stem, const nlohmann::json& config) {
    io::write_f64_le(io::with_suffix(stem, ".bin"), net.params().flatten());
    nlohmann::json meta = {
        {"kind", "denoiser"},
        {"data_file", io::with_suffix(stem, ".bin").filename().string()},
        {"dtype", "float64"},
        {"endianness", "little"},
        {"data_dim", net.data_dim()},
        {"time_embed_dim", net.time_embed_dim()},
        {"cond_dim", net.cond_dim()},
        {"sigma_data", net.skip_params().sigma_data},
        {"time_scale", net.skip_params().time_scale},
        {"trained_iterations", net.trained_iterations()},
        {"layers", mlp_layout_json(net.params())},
        {"config", config},
    };
    if (const auto& b = net.baseline()) {
        meta["baseline"] = {{"mean", b->mean}, {"var", b->var}, {"alpha_bar", b->alpha_bar}};
    } else {
        meta["baseline"] = nullptr;
    }
    io::write_json(io::with_suffix(stem, ".json"), meta);
}

DenoiserNet load_denoiser(const std::filesystem::path& stem) {
    const nlohmann::json meta = io::read_json(io::with_suffix(stem, ".json"));
    if (meta.value("kind", "") != "denoiser") throw StageError(stem.string() + ": not a denoiser checkpoint");
    Rng unused(0);
    const std::vector<int> no_hidden;
    DenoiserNet net = DenoiserNet::create(meta.at("data_dim").get<int>(), meta.at("time_embed_dim").get<int>(),
                                          meta.at("cond_dim").get<int>(), no_hidden, unused);
    net.params() = mlp_from_layout(meta.at("layers"));
    if (net.params().input_width() !=
            static_cast<std::size_t>(net.data_dim() + net.time_embed_dim() + net.cond_dim()) ||
        net.params().output_width() != static_cast<std::size_t>(net.data_dim())) {
        throw StageError(stem.string() + ": layer shapes inconsistent with architecture");
    }
    net.params().assign_flat(io::read_f64_le(io::with_suffix(stem, ".bin")));
    net.set_skip_params({meta.at("sigma_data").get<double>(), meta.at("time_scale").get<double>()});
    net.add_trained_iterations(meta.at("trained_iterations").get<long>());
    if (meta.contains("baseline") && !meta.at("baseline").is_null()) {
        const auto& b = meta.at("baseline");
        net.set_baseline(GaussianBaseline{b.at("mean").get<std::vector<double>>(), b.at("var").get<std::vector<double>>(),
                                          b.at("alpha_bar").get<std::vector<double>>()});
    }
    return net;
}

}  // namespace dblp
