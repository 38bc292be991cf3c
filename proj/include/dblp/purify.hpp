// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dblp/attack.hpp"
#include "dblp/data.hpp"
#include "dblp/net.hpp"
#include "dblp/schedule.hpp"
#include "dblp/semantic.hpp"

namespace dblp {

enum class ConditionMode { None, FusedEdge };

struct PurifyConfig {
    int n_inference_steps = 1;
    ConditionMode condition_mode = ConditionMode::None;
    /// Timesteps for multi-step mode, strictly decreasing from N-1. Empty:
    /// evenly spaced, t_i = N-1 - i * N / n_inference_steps.
    std::vector<int> renoise_schedule;
    int ddim_steps = 50;
    semantic::SemanticConfig semantic;

    /// Throws ConfigError with a "purify.*" path.
    void validate(int num_steps) const;
    /// The explicit or derived timestep list (length n_inference_steps).
    std::vector<int> timesteps(int num_steps) const;
};

/// Maps a batch of (possibly adversarial) inputs to purified outputs.
class Purifier {
public:
    virtual ~Purifier() = default;
    virtual std::string name() const = 0;
    virtual Tensor purify(const Tensor& x, Rng& rng) const = 0;
    /// Seconds spent on condition construction by the last purify call (0 when unconditioned).
    virtual double last_condition_seconds() const { return 0.0; }
};

/// f(z, t, cond) -> clean estimate. `cond` is null for unconditioned calls.
using ConsistencyFn = std::function<Tensor(const Tensor& z, int t, const Tensor* cond)>;

/// Output range and image geometry of the data the purifier sees.
struct DataGeometry {
    std::optional<std::pair<double, double>> clip;  // images: [0, 1]
    int image_height = 0;
    int image_width = 0;

    static DataGeometry of(const Dataset& d);
};

/// Diffuse to N-1, apply the consistency function, then alternate re-diffusion
/// and re-application along the configured timesteps.
class ConsistencyPurifier : public Purifier {
public:
    ConsistencyPurifier(ConsistencyFn fn, NoiseSchedule schedule, PurifyConfig cfg, DataGeometry geometry);
    /// Throws StageError for a student with no training iterations.
    static ConsistencyPurifier from_student(const DenoiserNet& student, NoiseSchedule schedule, PurifyConfig cfg,
                                            DataGeometry geometry);

    std::string name() const override { return "consistency"; }
    Tensor purify(const Tensor& x, Rng& rng) const override;
    double last_condition_seconds() const override { return last_condition_seconds_; }

    /// Condition rows for x under the configured mode (null when none).
    std::optional<Tensor> condition_for(const Tensor& x) const;

private:
    ConsistencyFn fn_;
    NoiseSchedule schedule_;
    PurifyConfig cfg_;
    DataGeometry geometry_;
    mutable double last_condition_seconds_ = 0.0;
};

class IdentityPurifier : public Purifier {
public:
    std::string name() const override { return "identity"; }
    Tensor purify(const Tensor& x, Rng&) const override { return x; }
};

/// Diffuse to N-1 and run `steps` deterministic DDIM steps of the teacher back to a clean estimate.
class DdimPurifier : public Purifier {
public:
    DdimPurifier(DenoiserNet teacher, NoiseSchedule schedule, int steps, DataGeometry geometry);
    std::string name() const override { return "ddim" + std::to_string(steps_); }
    Tensor purify(const Tensor& x, Rng& rng) const override;

private:
    DenoiserNet teacher_;
    NoiseSchedule schedule_;
    int steps_;
    DataGeometry geometry_;
};

/// 10 log10(1 / MSE) for data in [0, 1]; +infinity for identical images.
double psnr(const GrayImage& a, const GrayImage& b);
/// Identical images report this value in tabular output.
inline constexpr double kPsnrCap = 99.0;

/// Mean SSIM over all 11x11 windows (Gaussian weights, sigma 1.5) on the
/// 0..255 scale. Throws ShapeError for mismatched or undersized images.
double ssim(const GrayImage& a, const GrayImage& b);

struct EvalReport {
    std::string purifier;
    int n_inference_steps = 1;
    std::string condition_mode = "none";
    int n_examples = 0;
    double clean_acc_undefended = 0.0;
    double clean_acc = 0.0;  // on purified clean inputs
    double robust_acc_undefended = 0.0;
    double robust_acc_purified = 0.0;
    std::optional<double> psnr_db;  // purified adversarial vs clean, images only
    std::optional<double> ssim;
    double per_image_seconds = 0.0;
    double edge_seconds = 0.0;
    double mean_perturbation_norm = 0.0;

    nlohmann::json to_json() const;
    static std::string csv_header();
    std::string csv_row() const;
};

struct EvalOptions {
    int timing_images = 20;
    /// Adversarial inputs computed elsewhere (same rows as the dataset); attacked here when absent.
    const Tensor* x_adv = nullptr;
};

/// Attacks (unless given), purifies clean and adversarial inputs and scores the victim.
/// Throws StageError on an empty dataset.
EvalReport evaluate(const Purifier& purifier, const ToyClassifier& victim, const Dataset& data,
                    const AttackBudget& budget, Rng& rng, const EvalOptions& opts = {},
                    Tensor* purified_adv = nullptr);

/// Median seconds of single-example purify calls over `count` examples (cycling through x).
/// `condition_seconds` receives the matching median of condition construction.
double median_purify_seconds(const Purifier& purifier, const Tensor& x, int count, Rng& rng,
                             double* condition_seconds = nullptr);

void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports);

}  // namespace dblp
