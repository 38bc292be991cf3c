// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include "dblp/bridge.hpp"

#include <cmath>
#include <string>

#include "dblp/errors.hpp"

namespace dblp {

namespace {

void require_rows(const Tensor& z, std::span<const int> timesteps, const NoiseSchedule& schedule) {
    if (timesteps.size() != z.rows()) {
        throw ShapeError("timestep count " + std::to_string(timesteps.size()) + " != batch size " +
                         std::to_string(z.rows()));
    }
    for (int t : timesteps) schedule.require_timestep(t);
}

}  // namespace

Tensor diffuse(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& schedule) {
    require_same_shape(z0, eps, "diffuse");
    schedule.require_timestep(t);
    const double a = schedule.sqrt_alpha_bar(t);
    const double s = schedule.sigma(t);
    Tensor out = Tensor::zeros_like(z0);
    for (std::size_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + s * eps[i];
    return out;
}

LatentBatch diffuse(const LatentBatch& z0, int t, const Tensor& eps, const NoiseSchedule& schedule) {
    return {diffuse(z0.data, t, eps, schedule), t};
}

Tensor diffuse(const Tensor& z0, std::span<const int> timesteps, const Tensor& eps,
               const NoiseSchedule& schedule) {
    require_same_shape(z0, eps, "diffuse");
    require_rows(z0, timesteps, schedule);
    Tensor out = Tensor::zeros_like(z0);
    const std::size_t n = z0.row_size();
    for (std::size_t r = 0; r < z0.rows(); ++r) {
        const double a = schedule.sqrt_alpha_bar(timesteps[r]);
        const double s = schedule.sigma(timesteps[r]);
        for (std::size_t j = r * n; j < (r + 1) * n; ++j) out[j] = a * z0[j] + s * eps[j];
    }
    return out;
}

Tensor bridge_latent(const Tensor& z0, const Tensor& eps, const Tensor& eps_a, int t,
                     const NoiseSchedule& schedule) {
    require_same_shape(z0, eps, "bridge_latent");
    require_same_shape(z0, eps_a, "bridge_latent");
    schedule.require_timestep(t);
    const double a = schedule.sqrt_alpha_bar(t);
    const double s = schedule.sigma(t);
    const double k = schedule.k(t);
    Tensor out = Tensor::zeros_like(z0);
    // Written as the adversarial forward diffusion minus k eps_a so that k = 0 reproduces it exactly.
    for (std::size_t i = 0; i < z0.size(); ++i) out[i] = (a * (z0[i] + eps_a[i]) + s * eps[i]) - k * eps_a[i];
    return out;
}

LatentBatch bridge_latent(const LatentBatch& z0, const Tensor& eps, const Tensor& eps_a, int t,
                          const NoiseSchedule& schedule) {
    return {bridge_latent(z0.data, eps, eps_a, t, schedule), t};
}

Tensor bridge_latent(const Tensor& z0, const Tensor& eps, const Tensor& eps_a, std::span<const int> timesteps,
                     const NoiseSchedule& schedule) {
    require_same_shape(z0, eps, "bridge_latent");
    require_same_shape(z0, eps_a, "bridge_latent");
    require_rows(z0, timesteps, schedule);
    Tensor out = Tensor::zeros_like(z0);
    const std::size_t n = z0.row_size();
    for (std::size_t r = 0; r < z0.rows(); ++r) {
        const int t = timesteps[r];
        const double a = schedule.sqrt_alpha_bar(t);
        const double s = schedule.sigma(t);
        const double k = schedule.k(t);
        for (std::size_t j = r * n; j < (r + 1) * n; ++j) out[j] = (a * (z0[j] + eps_a[j]) + s * eps[j]) - k * eps_a[j];
    }
    return out;
}

double epsilon_a_posterior_coefficient(int t, const NoiseSchedule& schedule,
                                       std::optional<std::span<const double>> k_override) {
    if (t < 1 || t > schedule.last()) {
        throw DomainError("epsilon_a_posterior_coefficient: t must lie in [1, N-1]");
    }
    std::span<const double> k = k_override.value_or(schedule.ks());
    if (k.size() != static_cast<std::size_t>(schedule.num_steps())) {
        throw ShapeError("k_override must have one entry per timestep");
    }
    const auto i = static_cast<std::size_t>(t);
    const double a = schedule.alpha(t);
    const double sa = std::sqrt(a);
    const double ab_prev = schedule.alpha_bar(t - 1);
    return sa * (sa * k[i - 1] - k[i]) / (1.0 - a) - (std::sqrt(ab_prev) - k[i - 1]) / (1.0 - ab_prev);
}

}  // namespace dblp
