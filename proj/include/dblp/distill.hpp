// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dblp/attack.hpp"
#include "dblp/data.hpp"
#include "dblp/net.hpp"
#include "dblp/schedule.hpp"
#include "dblp/semantic.hpp"

namespace dblp {

struct TeacherConfig {
    std::vector<int> hidden{128, 128};
    int time_embed_dim = 16;
    int n_iters = 5000;
    int batch_size = 128;
    double learning_rate = 0.01;
    double momentum = 0.9;
    int n_validation = 512;
    int log_every = 50;
    /// Attach a GaussianBaseline fitted to the training data.
    bool gaussian_baseline = true;
};

struct TeacherLogRow {
    int iter = 0;
    double loss = 0.0;
};

struct TeacherReport {
    double initial_val_mse = 0.0;
    double final_val_mse = 0.0;
    std::vector<TeacherLogRow> log;
};

/// Standard epsilon-prediction training: uniform t, z_t = diffuse(x, t, eps),
/// loss = mean (eps_hat - eps)^2. Throws StageError on non-finite loss. With
/// n_iters = 0 the freshly initialized net is returned.
DenoiserNet train_teacher(const Dataset& data, const NoiseSchedule& schedule, const TeacherConfig& cfg,
                          const SkipParams& skip, Rng& rng, TeacherReport* report = nullptr);

/// Validation epsilon MSE on fixed draws (same rng seed gives the same draws).
double teacher_validation_mse(const DenoiserNet& net, const Tensor& x, const NoiseSchedule& schedule,
                              std::uint64_t seed);

/// One deterministic DDIM step from the predicted noise:
///   z0_hat = (z - sigma_from eps_hat) / sqrt(ab_from),
///   out    = sqrt(ab_to) z0_hat + sigma_to eps_hat.
/// Requires t_to < t_from (per row).
Tensor ddim_step(const Tensor& z, const Tensor& eps_hat, std::span<const int> t_from, std::span<const int> t_to,
                 const NoiseSchedule& schedule);
/// Leapfrog step: sqrt(ab_to) z0_hat + h (sigma_to eps_hat), h in [0, 1].
Tensor leapfrog_step(const Tensor& z, const Tensor& eps_hat, std::span<const int> t_from,
                     std::span<const int> t_to, double h, const NoiseSchedule& schedule);

Tensor ddim_solve(const DenoiserNet& teacher, const Tensor& z, int t_from, int t_to, const Tensor* cond,
                  const NoiseSchedule& schedule);
Tensor ddim_solve(const DenoiserNet& teacher, const Tensor& z, std::span<const int> t_from,
                  std::span<const int> t_to, const Tensor* cond, const NoiseSchedule& schedule);
Tensor leapfrog_solve(const DenoiserNet& teacher, const Tensor& z, int t_from, int t_to, double h,
                      const Tensor* cond, const NoiseSchedule& schedule);
Tensor leapfrog_solve(const DenoiserNet& teacher, const Tensor& z, std::span<const int> t_from,
                      std::span<const int> t_to, double h, const Tensor* cond, const NoiseSchedule& schedule);

enum class DistanceKind { SquaredL2, Huber };

/// Per-example distance summed over coordinates. Squared L2 is sum r^2; Huber
/// uses 0.5 r^2 inside delta and delta (|r| - 0.5 delta) outside.
struct Distance {
    DistanceKind kind = DistanceKind::SquaredL2;
    double delta = 1.0;

    double value(double r) const;
    double derivative(double r) const;
};

struct DistillConfig {
    int k = 20;
    double leapfrog_h = 0.8;
    double ema_rate = 0.95;
    double lambda_rec = 1.0;
    int n_iters = 5000;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double momentum = 0.0;
    /// Probability that a training example is conditioned on its clean fused edge map.
    double cond_dropout_p = 1.0;
    bool use_condition = false;
    Distance distance;
    double min_victim_accuracy = 95.0;

    /// Throws ConfigError with a "distill.*" path. `num_steps` is the schedule length.
    void validate(int num_steps) const;
};

/// One minibatch: clean latents, diffusion noise, adversarial perturbation,
/// per-row solver endpoint n (the student sees n + k), optional condition rows.
struct DistillBatch {
    Tensor z0;
    Tensor eps;
    Tensor eps_a;
    std::vector<int> n;
    std::optional<Tensor> cond;
};

struct LossTerms {
    double cd = 0.0;
    double rec = 0.0;
    double total = 0.0;
    Mlp grads;  // student parameters only
};

/// Batch mean of d(f_student(z~_{n+k}, c, n+k), f_target(z^_n, c, n)) with z^_n the
/// teacher-driven leapfrog step from z~_{n+k}. The target branch is constant.
/// With k = 0 the solver is skipped (z^_n = z~_n).
std::pair<double, Mlp> cd_loss(const DenoiserNet& student, const DenoiserNet& target, const DenoiserNet& teacher,
                               const DistillBatch& batch, const DistillConfig& cfg, const NoiseSchedule& schedule);

/// Batch mean of d(f_student(z~_t, c, t), z0).
std::pair<double, Mlp> rec_loss(const DenoiserNet& student, const DistillBatch& batch, std::span<const int> t,
                                const DistillConfig& cfg, const NoiseSchedule& schedule);

/// L_CD + lambda_rec L_rec, both evaluated with the student at t_{n+k}.
LossTerms distillation_loss(const DenoiserNet& student, const DenoiserNet& target, const DenoiserNet& teacher,
                            const DistillBatch& batch, const DistillConfig& cfg, const NoiseSchedule& schedule);

struct DistillLogRow {
    int iter = 0;
    double cd = 0.0;
    double rec = 0.0;
    double total = 0.0;
};

struct DistillResult {
    DenoiserNet student;
    EmaState ema;
    std::vector<DistillLogRow> log;
    double victim_accuracy = 0.0;
    double first_decile_loss = 0.0;
    double last_decile_loss = 0.0;
};

/// Flattened fused edge maps of every image in the dataset (rows of zeros for non-image data).
Tensor edge_conditions(const Dataset& data, const semantic::SemanticConfig& cfg);

/// Noise-bridge distillation. `clean_edges` holds one condition row per
/// dataset example and is required when cfg.use_condition is set.
DistillResult run_distillation(const Dataset& data, const DenoiserNet& teacher, const ToyClassifier& victim,
                               const AttackBudget& budget, const DistillConfig& cfg, const NoiseSchedule& schedule,
                               Rng& rng, const Tensor* clean_edges = nullptr);

/// Mean over decile windows of the total loss column.
std::pair<double, double> decile_means(const std::vector<DistillLogRow>& log);

}  // namespace dblp
