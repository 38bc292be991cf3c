// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include "dblp/schedule.hpp"

#include <cmath>
#include <string>

#include "dblp/errors.hpp"

namespace dblp {

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
    if (betas.size() < 2) {
        throw ConfigError("schedule.n_steps", "need at least 2 steps, got " + std::to_string(betas.size()));
    }
    NoiseSchedule s;
    s.beta_ = std::move(betas);
    const std::size_t n = s.beta_.size();
    s.alpha_.resize(n);
    s.alpha_bar_.resize(n);
    s.k_.resize(n);

    double prod = 1.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double b = s.beta_[t];
        if (!(b > 0.0 && b < 1.0)) {
            throw ConfigError("schedule.beta", "beta[" + std::to_string(t) + "] = " + std::to_string(b) +
                                                   " outside (0, 1)");
        }
        s.alpha_[t] = 1.0 - b;
        prod *= s.alpha_[t];
        if (t > 0 && !(prod < s.alpha_bar_[t - 1])) {
            throw ConfigError("schedule.beta", "alpha_bar not strictly decreasing at step " + std::to_string(t));
        }
        if (!(prod > 0.0)) {
            throw ConfigError("schedule.beta", "alpha_bar underflows to zero at step " + std::to_string(t));
        }
        s.alpha_bar_[t] = prod;
    }

    const double abar_T = s.alpha_bar_.back();
    for (std::size_t t = 0; t < n; ++t) {
        s.k_[t] = bridge_k(s.alpha_bar_[t], abar_T);
    }
    return s;
}

void NoiseSchedule::require_timestep(int t) const {
    if (!valid_timestep(t)) {
        throw DomainError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(last()) + "]");
    }
}

NoiseSchedule NoiseSchedule::with_bridge_coefficients(std::vector<double> k) const {
    if (k.size() != k_.size()) {
        throw ShapeError("bridge coefficient override has wrong length");
    }
    NoiseSchedule copy = *this;
    copy.k_ = std::move(k);
    return copy;
}

NoiseSchedule build_linear_schedule(int n_steps, double beta_start, double beta_end) {
    if (n_steps < 2) {
        throw ConfigError("schedule.n_steps", "must be >= 2, got " + std::to_string(n_steps));
    }
    if (!(beta_start > 0.0 && beta_start < 1.0)) {
        throw ConfigError("schedule.beta_start", "must lie in (0, 1)");
    }
    if (!(beta_end > 0.0 && beta_end < 1.0)) {
        throw ConfigError("schedule.beta_end", "must lie in (0, 1)");
    }
    if (beta_start > beta_end) {
        throw ConfigError("schedule.beta_start", "must not exceed beta_end");
    }
    std::vector<double> betas(static_cast<std::size_t>(n_steps));
    const double step = (beta_end - beta_start) / static_cast<double>(n_steps - 1);
    for (int t = 0; t < n_steps; ++t) {
        betas[static_cast<std::size_t>(t)] = beta_start + step * t;
    }
    betas.back() = beta_end;
    return NoiseSchedule::from_betas(std::move(betas));
}

double bridge_k(double alpha_bar_t, double alpha_bar_T) {
    if (!(alpha_bar_t > 0.0) || alpha_bar_t > 1.0) {
        throw DomainError("bridge_k: alpha_bar_t must lie in (0, 1]");
    }
    if (!(alpha_bar_T > 0.0 && alpha_bar_T < 1.0)) {
        throw DomainError("bridge_k: alpha_bar_T must lie in (0, 1)");
    }
    // Factored as sqrt(ab_t) (1 - r): at t = T numerator and denominator of r are
    // the same floating-point product, so k_T is exactly 0.
    const double ratio = (alpha_bar_T * (1.0 - alpha_bar_t)) / (alpha_bar_t * (1.0 - alpha_bar_T));
    return std::sqrt(alpha_bar_t) * (1.0 - ratio);
}

double k_recursion_step(const NoiseSchedule& schedule, int t, double k_prev) {
    if (t < 1 || t > schedule.last()) {
        throw DomainError("k_recursion_step: t must lie in [1, N-1]");
    }
    const double a = schedule.alpha(t);
    const double ab = schedule.alpha_bar(t);
    const double ab_prev = schedule.alpha_bar(t - 1);
    const double denom = std::sqrt(a) * (1.0 - ab_prev);
    return (1.0 - ab) / denom * k_prev - std::sqrt(ab_prev) * (1.0 - a) / denom;
}

std::vector<double> k_recursion_residual(const NoiseSchedule& schedule) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(schedule.last()));
    for (int t = 1; t <= schedule.last(); ++t) {
        out.push_back(std::abs(schedule.k(t) - k_recursion_step(schedule, t, schedule.k(t - 1))));
    }
    return out;
}

}  // namespace dblp
