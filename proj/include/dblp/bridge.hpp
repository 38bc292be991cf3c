// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "dblp/schedule.hpp"
#include "dblp/tensor.hpp"

namespace dblp {

/// Latents with the timestep they live at. Data is (batch, dim) or (batch, C, H, W).
struct LatentBatch {
    Tensor data;
    int t = 0;
};

/// Forward diffusion sqrt(ab_t) z0 + sqrt(1 - ab_t) eps.
Tensor diffuse(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& schedule);
LatentBatch diffuse(const LatentBatch& z0, int t, const Tensor& eps, const NoiseSchedule& schedule);

/// Per-row timesteps; `timesteps.size()` must equal the batch size.
Tensor diffuse(const Tensor& z0, std::span<const int> timesteps, const Tensor& eps,
               const NoiseSchedule& schedule);

/// Adjusted bridge latent z~_t = z^a_t - k_t eps_a
///   = sqrt(ab_t) z0 + sqrt(1 - ab_t) eps + (sqrt(ab_t) - k_t) eps_a.
/// At T (k = 0) this is the plain forward diffusion of z0 + eps_a.
Tensor bridge_latent(const Tensor& z0, const Tensor& eps, const Tensor& eps_a, int t,
                     const NoiseSchedule& schedule);
LatentBatch bridge_latent(const LatentBatch& z0, const Tensor& eps, const Tensor& eps_a, int t,
                          const NoiseSchedule& schedule);
Tensor bridge_latent(const Tensor& z0, const Tensor& eps, const Tensor& eps_a, std::span<const int> timesteps,
                     const NoiseSchedule& schedule);

/// Net coefficient of eps_a in the linear term of the Gaussian posterior
/// q(z~_{t-1} | z~_t, z0):
///   sqrt(a_t) (sqrt(a_t) k_{t-1} - k_t) / (1 - a_t) - (sqrt(ab_{t-1}) - k_{t-1}) / (1 - ab_{t-1}).
/// Zero (to rounding) with the schedule's own k. `k_override`, when given,
/// replaces the schedule's coefficients (length N).
double epsilon_a_posterior_coefficient(int t, const NoiseSchedule& schedule,
                                       std::optional<std::span<const double>> k_override = std::nullopt);

}  // namespace dblp
