// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace dblp {

/// Discrete diffusion noise schedule with cached bridge coefficients.
///
/// Timesteps are indices 0..N-1; index N-1 is the terminal step T. For each
/// step the schedule stores beta, alpha = 1 - beta, the cumulative product
/// alpha_bar, and the bridge coefficient k that removes the adversarial
/// perturbation from the denoising posterior (k at T is 0, k tends to 1 as
/// alpha_bar tends to 1). Immutable after construction.
class NoiseSchedule {
public:
    /// Validates 0 < beta < 1 and strictly decreasing alpha_bar. Throws ConfigError.
    static NoiseSchedule from_betas(std::vector<double> betas);

    int num_steps() const noexcept { return static_cast<int>(beta_.size()); }
    int last() const noexcept { return num_steps() - 1; }

    double beta(int t) const { return beta_.at(static_cast<std::size_t>(t)); }
    double alpha(int t) const { return alpha_.at(static_cast<std::size_t>(t)); }
    double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
    double k(int t) const { return k_.at(static_cast<std::size_t>(t)); }

    double sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar(t)); }
    /// Noise scale sqrt(1 - alpha_bar_t).
    double sigma(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }
    /// Coefficient of the adversarial perturbation in the bridge latent, sqrt(alpha_bar_t) - k_t.
    double perturbation_scale(int t) const { return sqrt_alpha_bar(t) - k(t); }

    std::span<const double> betas() const noexcept { return beta_; }
    std::span<const double> alphas() const noexcept { return alpha_; }
    std::span<const double> alpha_bars() const noexcept { return alpha_bar_; }
    std::span<const double> ks() const noexcept { return k_; }

    bool valid_timestep(int t) const noexcept { return t >= 0 && t < num_steps(); }
    /// Throws DomainError when t is outside [0, N-1].
    void require_timestep(int t) const;

    /// Copy with the bridge coefficients replaced. Only meaningful for
    /// verification (negative controls); the copy is not re-validated.
    NoiseSchedule with_bridge_coefficients(std::vector<double> k) const;

private:
    NoiseSchedule() = default;

    std::vector<double> beta_;
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_;
    std::vector<double> k_;
};

/// Linear beta schedule. Requires n_steps >= 2 and 0 < beta_start <= beta_end < 1.
NoiseSchedule build_linear_schedule(int n_steps, double beta_start, double beta_end);

/// Closed-form bridge coefficient
///   k_t = sqrt(ab_t) - ab_T (1 - ab_t) / (sqrt(ab_t) (1 - ab_T)).
/// Throws DomainError for alpha_bar_t <= 0 or alpha_bar_T outside (0, 1).
double bridge_k(double alpha_bar_t, double alpha_bar_T);

/// k_t predicted from k_{t-1} by the posterior-cancellation recursion
///   k_t = (1 - ab_t) / (sqrt(a_t) (1 - ab_{t-1})) k_{t-1}
///         - sqrt(ab_{t-1}) (1 - a_t) / (sqrt(a_t) (1 - ab_{t-1})).
/// Requires t >= 1.
double k_recursion_step(const NoiseSchedule& schedule, int t, double k_prev);

/// |k_t - k_recursion_step(t, k_{t-1})| for t = 1..N-1 (length N-1).
std::vector<double> k_recursion_residual(const NoiseSchedule& schedule);

}  // namespace dblp
